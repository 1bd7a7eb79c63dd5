//! Concrete confined-boson systems: effective-potential evaluation,
//! location of the symmetric large-dimension minimum, and extraction of
//! the expansion scalars feeding the normal-mode solver and the
//! first-order correction.
//!
//! A model is a confining potential applied to every particle radius plus
//! an optional pair interaction in the interparticle distances. With unit
//! mass and the dimension-scaling convention adopted throughout (the
//! stiffness factor normalized to value 1 and slope 0 at the limit), the
//! effective potential augments the bare potentials with a
//! centrifugal-like barrier per particle,
//!
//! ```text
//! [N(N-2) delta^2 + (1-(N+1)delta)^2 c_i] / (8 r_i^2),
//! ```
//!
//! where `c_i` is the i-th diagonal element of the inverse angle-cosine
//! Gram matrix — equivalently the ratio of the i-th principal minor of
//! that matrix to its determinant. At `delta = 0` the ground state
//! localizes at a configuration that is totally symmetric under particle
//! relabeling, every radius equal and every angle cosine equal, so
//! minimization is a two-variable problem however large N grows.
//!
//! Expansion data is read off graph by graph: a derivative of the
//! effective potential (or of an inverse-mass matrix element) at one
//! representative index tuple of a graph determines the scalar for the
//! whole orbit. A second representative from the same orbit is evaluated
//! as a cross-check; disagreement signals a symmetry bug and is reported
//! as an error rather than averaged away. Coordinate derivatives use
//! Richardson-refined central differences of the analytic gradient;
//! derivatives in the dimension parameter use a one-sided stencil that is
//! exact here because `delta` enters the effective potential
//! quadratically.

use crate::anharmonic::{
    force_catalog, kinetic_catalog, kinetic_coordinate_slot, kinetic_derivative_slots, CubicForce,
    CubicKinetic, LinearScalars, QScalars,
};
use crate::coordinates::{InternalIndex, ParticleCount};
use crate::error::{Error, Result};
use crate::fgmethod::{
    product_coefficients, solve_sectors, FgCoefficients, GCoefficients, NormalModeSolution,
};
use crate::graphs::{BinaryInvariant, Block, GraphId};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Confining potential applied to every particle radius.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Confining {
    /// v(r) = k r^2 / 2.
    Harmonic { k: f64 },
}

impl Confining {
    pub fn value(self, r: f64) -> f64 {
        match self {
            Confining::Harmonic { k } => 0.5 * k * r * r,
        }
    }

    pub fn slope(self, r: f64) -> f64 {
        match self {
            Confining::Harmonic { k } => k * r,
        }
    }
}

/// Pair interaction as a function of the interparticle distance.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Interaction {
    /// V(d) = lambda d^2 / 2; positive lambda pulls pairs together.
    Harmonic { lambda: f64 },
    #[default]
    None,
}

impl Interaction {
    pub fn value(self, d: f64) -> f64 {
        match self {
            Interaction::Harmonic { lambda } => 0.5 * lambda * d * d,
            Interaction::None => 0.0,
        }
    }

    pub fn slope(self, d: f64) -> f64 {
        match self {
            Interaction::Harmonic { lambda } => lambda * d,
            Interaction::None => 0.0,
        }
    }
}

/// A two-body model: confinement plus pair interaction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialModel {
    pub conf: Confining,
    #[serde(default)]
    pub int: Interaction,
}

/// Expansion data supplied directly, bypassing minimization and finite
/// differencing. Omitted fields default to a unit harmonic block with no
/// anharmonicity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RawScalars {
    pub energy: f64,
    pub delta_slope: f64,
    pub quadratic_force: FgCoefficients,
    pub quadratic_kinetic: GCoefficients,
    pub linear_force: LinearScalars,
    /// Defaults to the coordinate-against-derivative contraction of the
    /// cubic kinetic map when omitted.
    pub linear_kinetic: Option<LinearScalars>,
    pub cubic_force: CubicForce,
    pub cubic_kinetic: CubicKinetic,
}

impl Default for RawScalars {
    fn default() -> Self {
        RawScalars {
            energy: 0.0,
            delta_slope: 0.0,
            quadratic_force: FgCoefficients {
                rr: [1.0, 0.0],
                rg: [0.0, 0.0],
                gr: [0.0, 0.0],
                gg: [1.0, 0.0, 0.0],
            },
            quadratic_kinetic: GCoefficients {
                rr: [1.0, 0.0],
                gr: [0.0, 0.0],
                gg: [1.0, 0.0, 0.0],
            },
            linear_force: LinearScalars::default(),
            linear_kinetic: None,
            cubic_force: CubicForce::default(),
            cubic_kinetic: CubicKinetic::default(),
        }
    }
}

/// Wrapper giving synthetic data its file shape: `{"synthetic": {...}}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticModel {
    pub synthetic: RawScalars,
}

/// A model source: a two-body potential processed through minimization
/// and finite differencing, or raw scalars used as-is.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelSpec {
    Potential(PotentialModel),
    Synthetic(Box<SyntheticModel>),
}

impl ModelSpec {
    /// The models shipped by name: "harmonic-harmonic" (unit trap,
    /// lambda = 0.05) and "synthetic" (unit harmonic block, zero
    /// anharmonicity).
    pub fn builtin(name: &str) -> Option<ModelSpec> {
        match name {
            "harmonic-harmonic" => Some(ModelSpec::harmonic_harmonic(1.0, 0.05)),
            "synthetic" => Some(ModelSpec::Synthetic(Box::new(SyntheticModel {
                synthetic: RawScalars::default(),
            }))),
            _ => None,
        }
    }

    /// Harmonic trap of stiffness `k` with harmonic pair coupling
    /// `lambda`.
    pub fn harmonic_harmonic(k: f64, lambda: f64) -> ModelSpec {
        ModelSpec::Potential(PotentialModel {
            conf: Confining::Harmonic { k },
            int: Interaction::Harmonic { lambda },
        })
    }

    pub fn from_json(text: &str) -> Result<ModelSpec> {
        serde_json::from_str(text).map_err(|e| Error::InputError(format!("model file: {e}")))
    }
}

// ---------------------------------------------------------------------------
// Effective potential and its analytic gradient
// ---------------------------------------------------------------------------

/// Builds the canonical coordinate vector (N radii, then the angle
/// cosines in pair order) for the totally symmetric configuration.
pub fn symmetric_point(r: f64, gamma: f64, n: ParticleCount) -> Vec<f64> {
    let mut y = vec![gamma; n.num_coords()];
    y[..n.n()].fill(r);
    y
}

/// Determinant of the symmetric angle-cosine Gram matrix in closed form.
pub fn symmetric_gram_determinant(gamma: f64, n: ParticleCount) -> f64 {
    let nf = n.get() as f64;
    (1.0 - gamma).powi(n.get() as i32 - 1) * (1.0 + (nf - 1.0) * gamma)
}

/// Diagonal of the inverse symmetric Gram matrix — the ratio of a
/// principal minor to the determinant — in closed form.
pub fn symmetric_gram_ratio(gamma: f64, n: ParticleCount) -> f64 {
    let nf = n.get() as f64;
    (1.0 + (nf - 2.0) * gamma) / ((1.0 - gamma) * (1.0 + (nf - 1.0) * gamma))
}

/// Diagonal and off-diagonal entries of the inverse symmetric Gram
/// matrix are `alpha + beta` and `beta` respectively.
fn symmetric_inverse_coeffs(gamma: f64, n: ParticleCount) -> (f64, f64) {
    let nf = n.get() as f64;
    let alpha = 1.0 / (1.0 - gamma);
    let beta = -gamma / ((1.0 - gamma) * (1.0 + (nf - 1.0) * gamma));
    (alpha, beta)
}

fn gamma_at(y: &[f64], a: u32, b: u32, n: ParticleCount) -> f64 {
    y[InternalIndex::pair(a, b).flat_index(n).expect("labels in range")]
}

fn gram_matrix(y: &[f64], n: ParticleCount) -> DMatrix<f64> {
    let nn = n.n();
    DMatrix::from_fn(nn, nn, |i, j| {
        if i == j {
            1.0
        } else {
            gamma_at(y, i as u32 + 1, j as u32 + 1, n)
        }
    })
}

/// Inverse of the angle-cosine Gram matrix; fails when the configuration
/// leaves the physical region.
fn gram_inverse(y: &[f64], n: ParticleCount) -> Result<DMatrix<f64>> {
    nalgebra::Cholesky::new(gram_matrix(y, n))
        .map(|c| c.inverse())
        .ok_or_else(|| Error::NotPositiveDefinite { what: "angle-cosine Gram matrix".into() })
}

fn check_point(y: &[f64], n: ParticleCount) -> Result<()> {
    if y.len() != n.num_coords() {
        return Err(Error::InputError(format!(
            "configuration has {} coordinates, expected {}",
            y.len(),
            n.num_coords()
        )));
    }
    if y[..n.n()].iter().any(|&r| r <= 0.0 || r.is_nan()) {
        return Err(Error::InputError("all radii must be positive".into()));
    }
    Ok(())
}

fn pair_distance(y: &[f64], i: u32, j: u32, n: ParticleCount) -> f64 {
    let (ri, rj) = (y[(i - 1) as usize], y[(j - 1) as usize]);
    let g = gamma_at(y, i, j, n);
    (ri * ri + rj * rj - 2.0 * ri * rj * g).max(0.0).sqrt()
}

/// Effective potential at a general internal configuration: confinement,
/// pair interaction, and the centrifugal-like barrier.
pub fn eval_veff(model: &PotentialModel, y: &[f64], delta: f64, n: ParticleCount) -> Result<f64> {
    check_point(y, n)?;
    let inv = gram_inverse(y, n)?;
    let nf = n.get() as f64;
    let s = 1.0 - (nf + 1.0) * delta;
    let curvature = nf * (nf - 2.0) * delta * delta;

    let mut total = 0.0;
    for (i, &r) in y[..n.n()].iter().enumerate() {
        total += (curvature + s * s * inv[(i, i)]) / (8.0 * r * r) + model.conf.value(r);
    }
    if !matches!(model.int, Interaction::None) {
        for j in 2..=n.get() {
            for i in 1..j {
                total += model.int.value(pair_distance(y, i, j, n));
            }
        }
    }
    Ok(total)
}

/// Analytic first partial derivatives of the effective potential, in the
/// canonical coordinate layout.
pub fn eval_gradient(
    model: &PotentialModel,
    y: &[f64],
    delta: f64,
    n: ParticleCount,
) -> Result<Vec<f64>> {
    check_point(y, n)?;
    let inv = gram_inverse(y, n)?;
    let nn = n.n();
    let nf = n.get() as f64;
    let s = 1.0 - (nf + 1.0) * delta;
    let curvature = nf * (nf - 2.0) * delta * delta;

    let mut grad = vec![0.0; n.num_coords()];
    for (i, &r) in y[..nn].iter().enumerate() {
        grad[i] = -(curvature + s * s * inv[(i, i)]) / (4.0 * r * r * r) + model.conf.slope(r);
    }
    // Moving one angle cosine gamma_ab moves the inverse diagonal by
    // d c_k = -2 inv[k,a] inv[k,b].
    for j in 2..=n.get() {
        for i in 1..j {
            let off = InternalIndex::pair(i, j).flat_index(n)?;
            let (a, b) = ((i - 1) as usize, (j - 1) as usize);
            let mut sum = 0.0;
            for k in 0..nn {
                sum += inv[(k, a)] * inv[(k, b)] / (y[k] * y[k]);
            }
            grad[off] = -(s * s) * sum / 4.0;
        }
    }
    if !matches!(model.int, Interaction::None) {
        for j in 2..=n.get() {
            for i in 1..j {
                let d = pair_distance(y, i, j, n);
                let slope = model.int.slope(d);
                let (ri, rj) = (y[(i - 1) as usize], y[(j - 1) as usize]);
                let g = gamma_at(y, i, j, n);
                grad[(i - 1) as usize] += slope * (ri - rj * g) / d;
                grad[(j - 1) as usize] += slope * (rj - ri * g) / d;
                grad[InternalIndex::pair(i, j).flat_index(n)?] -= slope * ri * rj / d;
            }
        }
    }
    Ok(grad)
}

/// One element of the inverse-mass (metric) matrix of the kinetic
/// operator at a general configuration: the radial block is the
/// identity, kinds do not mix, and an angular element is nonzero only
/// when its two pairs share a vertex.
pub fn metric_element(
    y: &[f64],
    a: InternalIndex,
    b: InternalIndex,
    n: ParticleCount,
) -> Result<f64> {
    check_point(y, n)?;
    a.flat_index(n)?;
    b.flat_index(n)?;
    let radius = |label: u32| y[(label - 1) as usize];
    Ok(match (a, b) {
        (InternalIndex::Radial(i), InternalIndex::Radial(j)) => {
            if i == j {
                1.0
            } else {
                0.0
            }
        }
        (InternalIndex::Radial(_), InternalIndex::Pair(..))
        | (InternalIndex::Pair(..), InternalIndex::Radial(_)) => 0.0,
        (InternalIndex::Pair(i, j), InternalIndex::Pair(k, l)) => {
            if (i, j) == (k, l) {
                let g = gamma_at(y, i, j, n);
                let (ri, rj) = (radius(i), radius(j));
                (1.0 - g * g) * (1.0 / (ri * ri) + 1.0 / (rj * rj))
            } else {
                let shared: Vec<u32> = a.labels().filter(|&v| b.contains(v)).collect();
                match shared[..] {
                    [v] => {
                        let p = a.labels().find(|&x| x != v).expect("distinct labels");
                        let q = b.labels().find(|&x| x != v).expect("distinct labels");
                        let rv = radius(v);
                        (gamma_at(y, p, q, n) - gamma_at(y, v, p, n) * gamma_at(y, v, q, n))
                            / (rv * rv)
                    }
                    _ => 0.0,
                }
            }
        }
    })
}

// ---------------------------------------------------------------------------
// Symmetric two-variable reduction and minimization
// ---------------------------------------------------------------------------

/// Total effective potential at the symmetric configuration, delta = 0,
/// in closed form.
fn symmetric_value(model: &PotentialModel, n: ParticleCount, r: f64, gamma: f64) -> f64 {
    let nf = n.get() as f64;
    let pairs = n.num_pairs() as f64;
    let d = r * (2.0 * (1.0 - gamma)).sqrt();
    nf * (symmetric_gram_ratio(gamma, n) / (8.0 * r * r) + model.conf.value(r))
        + pairs * model.int.value(d)
}

/// Per-coordinate partial derivatives (one radius, one angle cosine) at
/// the symmetric configuration, delta = 0.
fn symmetric_partials(model: &PotentialModel, n: ParticleCount, r: f64, gamma: f64) -> (f64, f64) {
    let nf = n.get() as f64;
    let (alpha, beta) = symmetric_inverse_coeffs(gamma, n);
    let cbar = alpha + beta;
    let d = r * (2.0 * (1.0 - gamma)).sqrt();
    let slope = model.int.slope(d);
    let (int_r, int_g) = if d > 0.0 {
        (slope * r * (1.0 - gamma) / d, -slope * r * r / d)
    } else {
        (0.0, 0.0)
    };

    let g_r = -cbar / (4.0 * r * r * r) + model.conf.slope(r) + (nf - 1.0) * int_r;
    let pair_sum = 2.0 * cbar * beta + (nf - 2.0) * beta * beta;
    let g_g = -pair_sum / (4.0 * r * r) + int_g;
    (g_r, g_g)
}

/// The symmetric stationary configuration and its energy.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymmetricMinimum {
    pub r: f64,
    pub gamma: f64,
    pub energy: f64,
    /// Largest per-coordinate partial derivative left at the solution.
    pub gradient_norm: f64,
    pub iterations: usize,
}

const MAX_NEWTON_ITERATIONS: usize = 100;
const RADIUS_BOUNDS: (f64, f64) = (1e-3, 1e4);

/// Finite-difference Jacobian of the symmetric per-coordinate partials
/// with respect to (r, gamma).
fn partials_jacobian(model: &PotentialModel, n: ParticleCount, r: f64, g: f64) -> [[f64; 2]; 2] {
    let hr = 1e-5 * r.abs().max(1.0);
    let hg = 1e-5;
    let pr_p = symmetric_partials(model, n, r + hr, g);
    let pr_m = symmetric_partials(model, n, r - hr, g);
    let pg_p = symmetric_partials(model, n, r, g + hg);
    let pg_m = symmetric_partials(model, n, r, g - hg);
    [
        [(pr_p.0 - pr_m.0) / (2.0 * hr), (pg_p.0 - pg_m.0) / (2.0 * hg)],
        [(pr_p.1 - pr_m.1) / (2.0 * hr), (pg_p.1 - pg_m.1) / (2.0 * hg)],
    ]
}

fn accept_stationary_point(
    model: &PotentialModel,
    n: ParticleCount,
    r: f64,
    g: f64,
    residual: f64,
    iterations: usize,
) -> Result<SymmetricMinimum> {
    let nf = n.get() as f64;
    let pairs = n.num_pairs() as f64;
    let jac = partials_jacobian(model, n, r, g);
    // Hessian of the two-variable energy: each row of per-coordinate
    // partials scales with how many coordinates move together.
    let h00 = nf * jac[0][0];
    let h11 = pairs * jac[1][1];
    let h01 = 0.5 * (nf * jac[0][1] + pairs * jac[1][0]);
    let mean = 0.5 * (h00 + h11);
    let disc = (0.25 * (h00 - h11) * (h00 - h11) + h01 * h01).sqrt();
    let (ev0, ev1) = (mean - disc, mean + disc);
    if ev0 <= 1e-9 * ev1.abs().max(1.0) {
        return Err(Error::SaddlePoint { r, gamma: g, ev0, ev1 });
    }
    Ok(SymmetricMinimum {
        r,
        gamma: g,
        energy: symmetric_value(model, n, r, g),
        gradient_norm: residual,
        iterations,
    })
}

/// Locates the totally symmetric minimum of the effective potential at
/// delta = 0: a coarse scan over a log-radius grid and the physical
/// angle range seeds Newton iteration on the two stationarity
/// conditions, with backtracking and a curvature check at the solution.
pub fn find_minimum(model: &PotentialModel, n: ParticleCount) -> Result<SymmetricMinimum> {
    let nf = n.get() as f64;
    let gamma_floor = -1.0 / (nf - 1.0);
    let in_domain = |r: f64, g: f64| {
        r > RADIUS_BOUNDS.0
            && r < RADIUS_BOUNDS.1
            && g > gamma_floor + 1e-9
            && g < 1.0 - 1e-9
    };

    let mut best = (f64::INFINITY, 1.0, 0.0);
    let (r_lo, r_hi) = (0.05f64, 20.0f64);
    let span = 0.95 - gamma_floor;
    for ir in 0..=72 {
        let r = r_lo * (r_hi / r_lo).powf(ir as f64 / 72.0);
        for ig in 0..=40 {
            let g = gamma_floor + span * (0.001 + 0.999 * ig as f64 / 40.0);
            let v = symmetric_value(model, n, r, g);
            if v < best.0 {
                best = (v, r, g);
            }
        }
    }

    let (mut r, mut g) = (best.1, best.2);
    let mut partials = symmetric_partials(model, n, r, g);
    let mut residual = partials.0.abs().max(partials.1.abs());
    let tolerance =
        |r: f64, g: f64| 1e-12 * symmetric_value(model, n, r, g).abs().max(1.0);

    for iteration in 0..MAX_NEWTON_ITERATIONS {
        if residual < tolerance(r, g) {
            return accept_stationary_point(model, n, r, g, residual, iteration);
        }
        let jac = partials_jacobian(model, n, r, g);
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        if det.abs()
            <= 1e-14 * (jac[0][0] * jac[1][1]).abs().max((jac[0][1] * jac[1][0]).abs())
        {
            return Err(Error::MinimizationDiverged { iterations: iteration, residual });
        }
        let step = (
            -(jac[1][1] * partials.0 - jac[0][1] * partials.1) / det,
            -(jac[0][0] * partials.1 - jac[1][0] * partials.0) / det,
        );
        // Backtrack until the stationarity residual actually drops.
        let mut t = 1.0;
        loop {
            let (rc, gc) = (r + t * step.0, g + t * step.1);
            if in_domain(rc, gc) {
                let pc = symmetric_partials(model, n, rc, gc);
                let rn = pc.0.abs().max(pc.1.abs());
                if rn < tolerance(rc, gc) || rn <= residual * (1.0 - 0.25 * t) {
                    r = rc;
                    g = gc;
                    partials = pc;
                    residual = rn;
                    break;
                }
            }
            t *= 0.5;
            if t < 1e-12 {
                return Err(Error::MinimizationDiverged { iterations: iteration, residual });
            }
        }
    }
    Err(Error::MinimizationDiverged { iterations: MAX_NEWTON_ITERATIONS, residual })
}

// ---------------------------------------------------------------------------
// Finite-difference kernels
// ---------------------------------------------------------------------------

const QUADRATIC_STEP: f64 = 1e-4;
/// Second-difference kernels divide rounding noise by the step squared,
/// so they need a coarser step than first differences.
const CUBIC_STEP: f64 = 1e-2;
const DELTA_STEP: f64 = 1e-3;
/// Relative floor under which an extracted scalar is treated as an exact
/// zero and dropped from its sparse map.
const ZERO_CLAMP: f64 = 1e-10;
/// Representative disagreement treated as a hard symmetry failure.
const TUPLE_HARD_LIMIT: f64 = 1e-6;

/// Richardson ladder over three step halvings of an even-error kernel.
fn ladder(d1: f64, d2: f64, d3: f64) -> f64 {
    let r1 = (4.0 * d2 - d1) / 3.0;
    let r2 = (4.0 * d3 - d2) / 3.0;
    (16.0 * r2 - r1) / 15.0
}

/// Refined central first derivative of `f` at zero.
fn refined_d1(f: &mut dyn FnMut(f64) -> Result<f64>, h: f64) -> Result<f64> {
    let mut central = |s: f64| -> Result<f64> { Ok((f(s)? - f(-s)?) / (2.0 * s)) };
    let (d1, d2, d3) = (central(h)?, central(h / 2.0)?, central(h / 4.0)?);
    Ok(ladder(d1, d2, d3))
}

/// Refined central second derivative of `f` at zero.
fn refined_d2(f: &mut dyn FnMut(f64) -> Result<f64>, h: f64) -> Result<f64> {
    let f0 = f(0.0)?;
    let mut second = |s: f64| -> Result<f64> { Ok((f(s)? - 2.0 * f0 + f(-s)?) / (s * s)) };
    let (d1, d2, d3) = (second(h)?, second(h / 2.0)?, second(h / 4.0)?);
    Ok(ladder(d1, d2, d3))
}

/// Refined central cross second derivative of `f(a, b)` at zero.
fn refined_d2_cross(
    f: &mut dyn FnMut(f64, f64) -> Result<f64>,
    ha: f64,
    hb: f64,
) -> Result<f64> {
    let mut cross = |t: f64| -> Result<f64> {
        let (sa, sb) = (t * ha, t * hb);
        Ok((f(sa, sb)? - f(sa, -sb)? - f(-sa, sb)? + f(-sa, -sb)?) / (4.0 * sa * sb))
    };
    let (d1, d2, d3) = (cross(1.0)?, cross(0.5)?, cross(0.25)?);
    Ok(ladder(d1, d2, d3))
}

/// One-sided first derivative at zero, exact for integrands quadratic in
/// the parameter.
fn one_sided_slope(f: &mut dyn FnMut(f64) -> Result<f64>, h: f64) -> Result<f64> {
    Ok((-3.0 * f(0.0)? + 4.0 * f(h)? - f(2.0 * h)?) / (2.0 * h))
}

// ---------------------------------------------------------------------------
// Extraction
// ---------------------------------------------------------------------------

/// Expansion data at the symmetric point, in the form the quadratic
/// solver and the first-order correction consume.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TaylorData {
    /// Effective-potential value at the expansion point, delta = 0.
    pub energy: f64,
    /// First derivative in the dimension parameter at the frozen point.
    pub delta_slope: f64,
    pub quadratic_force: FgCoefficients,
    pub quadratic_kinetic: GCoefficients,
    pub scalars: QScalars,
    /// Largest coordinate partial of the potential at the point; the odd
    /// first-order gradient term vanishes only if this does.
    pub gradient_amax: f64,
    /// Worst disagreement between two representatives of one graph.
    pub cross_tuple_residual: f64,
}

/// A fully ingested system: the located minimum (when the source was a
/// potential) and the expansion data at the expansion point.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SystemData {
    pub n: u32,
    pub minimum: Option<SymmetricMinimum>,
    pub taylor: TaylorData,
}

/// Evaluates a per-tuple quantity at the first and last members of a
/// graph orbit; disagreement beyond the hard limit is a symmetry bug.
fn checked(
    id: GraphId,
    n: ParticleCount,
    worst: &mut f64,
    eval: &mut dyn FnMut(&[InternalIndex]) -> Result<f64>,
) -> Result<f64> {
    let members = BinaryInvariant::new(id, n).members();
    let first = eval(&members[0])?;
    if members.len() > 1 {
        let second = eval(members.last().expect("nonempty"))?;
        let diff = (first - second).abs();
        if diff > TUPLE_HARD_LIMIT * first.abs().max(1.0) {
            return Err(Error::TupleMismatch { graph: id.to_string(), first, second });
        }
        *worst = worst.max(diff);
    }
    Ok(first)
}

/// Third partial of the potential along three coordinate offsets: a
/// refined second difference of the analytic gradient.
fn third_partial(
    model: &PotentialModel,
    y: &[f64],
    n: ParticleCount,
    o0: usize,
    o1: usize,
    o2: usize,
) -> Result<f64> {
    if o0 == o1 {
        let h = CUBIC_STEP * y[o0].abs().max(1.0);
        refined_d2(
            &mut |s| {
                let mut moved = y.to_vec();
                moved[o0] += s;
                Ok(eval_gradient(model, &moved, 0.0, n)?[o2])
            },
            h,
        )
    } else {
        let ha = CUBIC_STEP * y[o0].abs().max(1.0);
        let hb = CUBIC_STEP * y[o1].abs().max(1.0);
        refined_d2_cross(
            &mut |sa, sb| {
                let mut moved = y.to_vec();
                moved[o0] += sa;
                moved[o1] += sb;
                Ok(eval_gradient(model, &moved, 0.0, n)?[o2])
            },
            ha,
            hb,
        )
    }
}

/// Drops entries that are zero up to finite-difference noise, keyed off
/// the largest magnitude in the map.
fn clamp_map(map: BTreeMap<GraphId, f64>) -> BTreeMap<GraphId, f64> {
    let amax = map.values().fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = ZERO_CLAMP * amax.max(1.0);
    map.into_iter().filter(|(_, v)| v.abs() > floor).collect()
}

/// Reads the expansion scalars off the model at a frozen symmetric
/// point: quadratic data always, rank-one and rank-three anharmonic data
/// when `order` is 1.
pub fn extract_taylor(
    model: &PotentialModel,
    minimum: &SymmetricMinimum,
    n: ParticleCount,
    order: usize,
) -> Result<TaylorData> {
    if n.get() < 4 {
        return Err(Error::TwoSectorUnavailable(n.get()));
    }
    if order > 1 {
        return Err(Error::InputError(format!(
            "expansion order {order} not supported; quadratic data plus one anharmonic order only"
        )));
    }
    let y = symmetric_point(minimum.r, minimum.gamma, n);
    let energy = eval_veff(model, &y, 0.0, n)?;
    let gradient_amax =
        eval_gradient(model, &y, 0.0, n)?.iter().fold(0.0f64, |m, g| m.max(g.abs()));

    let mut worst = 0.0f64;

    // Second partials of the potential, one scalar per two-index class.
    let mut hessian_class = |id: GraphId| -> Result<f64> {
        checked(id, n, &mut worst, &mut |t: &[InternalIndex]| {
            let (a, b) = (t[0].flat_index(n)?, t[1].flat_index(n)?);
            let h = QUADRATIC_STEP * y[a].abs().max(1.0);
            refined_d1(
                &mut |s| {
                    let mut moved = y.clone();
                    moved[a] += s;
                    Ok(eval_gradient(model, &moved, 0.0, n)?[b])
                },
                h,
            )
        })
    };
    let rr = [
        hessian_class(GraphId::new(Block::Rr, 0))?,
        hessian_class(GraphId::new(Block::Rr, 1))?,
    ];
    let mixed = [
        hessian_class(GraphId::new(Block::GammaR, 0))?,
        hessian_class(GraphId::new(Block::GammaR, 1))?,
    ];
    let gg = [
        hessian_class(GraphId::new(Block::GammaGamma, 0))?,
        hessian_class(GraphId::new(Block::GammaGamma, 1))?,
        hessian_class(GraphId::new(Block::GammaGamma, 2))?,
    ];
    let quadratic_force = FgCoefficients { rr, rg: mixed, gr: mixed, gg };

    // Metric elements at the point, one per two-index class.
    let mut metric_class = |id: GraphId| -> Result<f64> {
        checked(id, n, &mut worst, &mut |t: &[InternalIndex]| {
            metric_element(&y, t[0], t[1], n)
        })
    };
    let quadratic_kinetic = GCoefficients {
        rr: [
            metric_class(GraphId::new(Block::Rr, 0))?,
            metric_class(GraphId::new(Block::Rr, 1))?,
        ],
        gr: [
            metric_class(GraphId::new(Block::GammaR, 0))?,
            metric_class(GraphId::new(Block::GammaR, 1))?,
        ],
        gg: [
            metric_class(GraphId::new(Block::GammaGamma, 0))?,
            metric_class(GraphId::new(Block::GammaGamma, 1))?,
            metric_class(GraphId::new(Block::GammaGamma, 2))?,
        ],
    };

    let delta_slope = one_sided_slope(&mut |d| eval_veff(model, &y, d, n), DELTA_STEP)?;

    let mut scalars = QScalars::default();
    if order >= 1 {
        // Coordinate derivatives of the dimension-parameter slope.
        let mut slope_class = |id: GraphId| -> Result<f64> {
            checked(id, n, &mut worst, &mut |t: &[InternalIndex]| {
                let off = t[0].flat_index(n)?;
                one_sided_slope(&mut |d| Ok(eval_gradient(model, &y, d, n)?[off]), DELTA_STEP)
            })
        };
        let force1 = LinearScalars {
            radial: slope_class(GraphId::new(Block::R, 0))?,
            angular: slope_class(GraphId::new(Block::Gamma, 0))?,
        };

        let mut force3 = BTreeMap::new();
        for id in force_catalog() {
            if BinaryInvariant::new(id, n).count() == 0 {
                continue;
            }
            let q = checked(id, n, &mut worst, &mut |t: &[InternalIndex]| {
                let (o0, o1, o2) =
                    (t[0].flat_index(n)?, t[1].flat_index(n)?, t[2].flat_index(n)?);
                third_partial(model, &y, n, o0, o1, o2)
            })?;
            force3.insert(id, q);
        }

        // First derivatives of metric elements, coordinate slot first.
        let mut kinetic3 = BTreeMap::new();
        for id in kinetic_catalog() {
            if BinaryInvariant::new(id, n).count() == 0 {
                continue;
            }
            let coord = kinetic_coordinate_slot(id.block);
            let (d1s, d2s) = kinetic_derivative_slots(id.block);
            let q = checked(id, n, &mut worst, &mut |t: &[InternalIndex]| {
                let off = t[coord].flat_index(n)?;
                let h = QUADRATIC_STEP * y[off].abs().max(1.0);
                refined_d1(
                    &mut |s| {
                        let mut moved = y.clone();
                        moved[off] += s;
                        metric_element(&moved, t[d1s], t[d2s], n)
                    },
                    h,
                )
            })?;
            kinetic3.insert(id, q);
        }

        let force3 = CubicForce::new(clamp_map(force3))?;
        let kinetic3 = CubicKinetic::new(clamp_map(kinetic3))?;
        let kinetic1 = LinearScalars {
            radial: kinetic3.contracted_radial(n),
            angular: kinetic3.contracted_angular(n),
        };
        scalars = QScalars { force1, kinetic1, force3, kinetic3 };
    }

    Ok(TaylorData {
        energy,
        delta_slope,
        quadratic_force,
        quadratic_kinetic,
        scalars,
        gradient_amax,
        cross_tuple_residual: worst,
    })
}

fn taylor_from_raw(raw: &RawScalars, n: ParticleCount) -> Result<TaylorData> {
    let kinetic1 = raw.linear_kinetic.unwrap_or_else(|| LinearScalars {
        radial: raw.cubic_kinetic.contracted_radial(n),
        angular: raw.cubic_kinetic.contracted_angular(n),
    });
    let scalars = QScalars {
        force1: raw.linear_force,
        kinetic1,
        force3: raw.cubic_force.clone(),
        kinetic3: raw.cubic_kinetic.clone(),
    };
    scalars.validate_for(n)?;
    Ok(TaylorData {
        energy: raw.energy,
        delta_slope: raw.delta_slope,
        quadratic_force: raw.quadratic_force,
        quadratic_kinetic: raw.quadratic_kinetic,
        scalars,
        gradient_amax: 0.0,
        cross_tuple_residual: 0.0,
    })
}

/// Solves the sector eigenproblem for extracted quadratic data. The
/// solver consumes the coefficients of the product matrix (force times
/// inverse-mass), so that product is formed first.
pub fn normal_modes(taylor: &TaylorData, n: ParticleCount) -> Result<NormalModeSolution> {
    let fg = product_coefficients(&taylor.quadratic_force, &taylor.quadratic_kinetic.as_product(), n)?;
    solve_sectors(&fg, &taylor.quadratic_kinetic, n)
}

/// Runs a model source end to end into expansion data.
pub fn build_system(spec: &ModelSpec, n: ParticleCount) -> Result<SystemData> {
    match spec {
        ModelSpec::Potential(model) => {
            let minimum = find_minimum(model, n)?;
            let taylor = extract_taylor(model, &minimum, n, 1)?;
            Ok(SystemData { n: n.get(), minimum: Some(minimum), taylor })
        }
        ModelSpec::Synthetic(synth) => {
            let taylor = taylor_from_raw(&synth.synthetic, n)?;
            Ok(SystemData { n: n.get(), minimum: None, taylor })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fgmethod::Mode;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pc(n: u32) -> ParticleCount {
        ParticleCount::new(n).unwrap()
    }

    fn hh(k: f64, lambda: f64) -> PotentialModel {
        PotentialModel {
            conf: Confining::Harmonic { k },
            int: Interaction::Harmonic { lambda },
        }
    }

    /// A positive-definite angle configuration from random unit vectors.
    fn random_point(rng: &mut ChaCha8Rng, n: ParticleCount) -> Vec<f64> {
        let nn = n.n();
        let dim = nn + 3;
        let vectors: Vec<Vec<f64>> = (0..nn)
            .map(|_| {
                let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                v.into_iter().map(|x| x / norm).collect()
            })
            .collect();
        let mut y = vec![0.0; n.num_coords()];
        for slot in y.iter_mut().take(nn) {
            *slot = rng.gen_range(0.6..1.6);
        }
        for j in 2..=n.get() {
            for i in 1..j {
                let dot = vectors[(i - 1) as usize]
                    .iter()
                    .zip(&vectors[(j - 1) as usize])
                    .map(|(a, b)| a * b)
                    .sum::<f64>();
                y[InternalIndex::pair(i, j).flat_index(n).unwrap()] = dot;
            }
        }
        y
    }

    proptest! {
        #[test]
        fn gram_closed_forms_match_direct_linear_algebra(
            nn in 4u32..=8,
            t in 0.0f64..1.0,
        ) {
            let n = pc(nn);
            let nf = nn as f64;
            let floor = -1.0 / (nf - 1.0);
            let gamma = floor + (0.95 - floor) * (0.02 + 0.96 * t);
            let y = symmetric_point(1.0, gamma, n);
            let det = gram_matrix(&y, n).determinant();
            let closed = symmetric_gram_determinant(gamma, n);
            prop_assert!((det - closed).abs() <= 1e-10 * det.abs().max(1e-12));
            let inv = gram_inverse(&y, n).unwrap();
            let ratio = symmetric_gram_ratio(gamma, n);
            for i in 0..n.n() {
                prop_assert!((inv[(i, i)] - ratio).abs() <= 1e-9 * ratio.abs());
            }
        }
    }

    #[test]
    fn gradient_matches_direct_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for nn in [4u32, 6] {
            let n = pc(nn);
            let model = hh(1.0, 0.3);
            let y = random_point(&mut rng, n);
            for delta in [0.0, 0.15] {
                let grad = eval_gradient(&model, &y, delta, n).unwrap();
                for (off, &g) in grad.iter().enumerate() {
                    let h = 1e-5 * y[off].abs().max(1.0);
                    let mut plus = y.clone();
                    plus[off] += h;
                    let mut minus = y.clone();
                    minus[off] -= h;
                    let fd = (eval_veff(&model, &plus, delta, n).unwrap()
                        - eval_veff(&model, &minus, delta, n).unwrap())
                        / (2.0 * h);
                    assert!(
                        (g - fd).abs() < 2e-6 * g.abs().max(1.0),
                        "N={nn} delta={delta} offset {off}: {g} vs {fd}"
                    );
                }
            }
        }
    }

    #[test]
    fn dimension_slope_matches_inverse_diagonal_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let n = pc(6);
        let model = hh(1.0, 0.1);
        for y in [symmetric_point(0.9, 0.2, n), random_point(&mut rng, n)] {
            let inv = gram_inverse(&y, n).unwrap();
            let nf = n.get() as f64;
            let expected = -(nf + 1.0) / 4.0
                * (0..n.n()).map(|i| inv[(i, i)] / (y[i] * y[i])).sum::<f64>();
            let got = one_sided_slope(&mut |d| eval_veff(&model, &y, d, n), DELTA_STEP).unwrap();
            assert_abs_diff_eq!(got, expected, epsilon = 1e-9 * expected.abs());
        }
    }

    #[test]
    fn metric_elements_follow_the_shared_vertex_rule() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let n = pc(5);
        let y = random_point(&mut rng, n);
        let g = |a: u32, b: u32| gamma_at(&y, a, b, n);
        let e12 = InternalIndex::pair(1, 2);
        let e23 = InternalIndex::pair(2, 3);
        let e45 = InternalIndex::pair(4, 5);

        let diag = metric_element(&y, e12, e12, n).unwrap();
        assert_abs_diff_eq!(
            diag,
            (1.0 - g(1, 2).powi(2)) * (1.0 / (y[0] * y[0]) + 1.0 / (y[1] * y[1])),
            epsilon = 1e-12
        );

        let shared = metric_element(&y, e12, e23, n).unwrap();
        assert_abs_diff_eq!(
            shared,
            (g(1, 3) - g(1, 2) * g(2, 3)) / (y[1] * y[1]),
            epsilon = 1e-12 * shared.abs().max(1.0)
        );
        assert_eq!(metric_element(&y, e23, e12, n).unwrap(), shared);

        assert_eq!(metric_element(&y, e12, e45, n).unwrap(), 0.0);
        assert_eq!(metric_element(&y, InternalIndex::radial(2), e12, n).unwrap(), 0.0);
        assert_eq!(
            metric_element(&y, InternalIndex::radial(3), InternalIndex::radial(3), n).unwrap(),
            1.0
        );
        assert_eq!(
            metric_element(&y, InternalIndex::radial(1), InternalIndex::radial(4), n).unwrap(),
            0.0
        );
    }

    #[test]
    fn symmetric_closed_forms_agree_with_generic_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for nn in [4u32, 6, 9] {
            let n = pc(nn);
            let model = hh(0.8, 0.2);
            for _ in 0..4 {
                let nf = nn as f64;
                let r = rng.gen_range(0.4..1.8);
                let g = rng.gen_range((-0.8 / (nf - 1.0))..0.8);
                let y = symmetric_point(r, g, n);
                let direct = eval_veff(&model, &y, 0.0, n).unwrap();
                assert_abs_diff_eq!(
                    symmetric_value(&model, n, r, g),
                    direct,
                    epsilon = 1e-12 * direct.abs().max(1.0)
                );
                let grad = eval_gradient(&model, &y, 0.0, n).unwrap();
                let (pr, pg) = symmetric_partials(&model, n, r, g);
                assert_abs_diff_eq!(pr, grad[0], epsilon = 1e-10 * pr.abs().max(1.0));
                let off = InternalIndex::pair(1, 2).flat_index(n).unwrap();
                assert_abs_diff_eq!(pg, grad[off], epsilon = 1e-10 * pg.abs().max(1.0));
            }
        }
    }

    #[test]
    fn noninteracting_minimum_has_closed_form() {
        for nn in [4u32, 7] {
            for k in [0.5, 1.0, 2.5] {
                let n = pc(nn);
                let model =
                    PotentialModel { conf: Confining::Harmonic { k }, int: Interaction::None };
                let m = find_minimum(&model, n).unwrap();
                let expected_r = (4.0 * k).powf(-0.25);
                assert!((m.r - expected_r).abs() < 1e-9, "N={nn} k={k}: r = {}", m.r);
                assert!(m.gamma.abs() < 1e-10, "gamma = {}", m.gamma);
                assert!(m.gradient_norm < 1e-10);
                let per = 1.0 / (8.0 * m.r * m.r) + 0.5 * k * m.r * m.r;
                assert!((m.energy - nn as f64 * per).abs() < 1e-10 * m.energy.abs());
            }
        }
    }

    #[test]
    fn interacting_minimum_is_stationary_in_the_full_space() {
        for (nn, k, lambda) in [(5u32, 1.0, 0.05), (8, 2.0, 0.4)] {
            let n = pc(nn);
            let model = hh(k, lambda);
            let m = find_minimum(&model, n).unwrap();
            assert!(m.gradient_norm < 1e-10);
            assert!(m.gamma > 0.0, "attractive coupling should tilt the angles");
            let y = symmetric_point(m.r, m.gamma, n);
            let grad = eval_gradient(&model, &y, 0.0, n).unwrap();
            let amax = grad.iter().fold(0.0f64, |a, g| a.max(g.abs()));
            assert!(amax < 1e-10, "N={nn}: residual gradient {amax}");
        }
    }

    #[test]
    fn unconfined_flat_model_is_rejected() {
        let model =
            PotentialModel { conf: Confining::Harmonic { k: 0.0 }, int: Interaction::None };
        let err = find_minimum(&model, pc(5)).unwrap_err();
        assert!(
            matches!(err, Error::MinimizationDiverged { .. } | Error::SaddlePoint { .. }),
            "unexpected error {err:?}"
        );
    }

    #[test]
    fn extraction_matches_hand_derivatives() {
        let n = pc(6);
        let nf = 6.0;
        let lambda = 0.05;
        let system = build_system(&ModelSpec::harmonic_harmonic(1.0, lambda), n).unwrap();
        let m = system.minimum.unwrap();
        let t = &system.taylor;
        let (r, g) = (m.r, m.gamma);
        let (alpha, beta) = symmetric_inverse_coeffs(g, n);
        let cbar = alpha + beta;

        assert!(t.gradient_amax < 1e-10, "first-order gradient term {}", t.gradient_amax);
        assert!(t.cross_tuple_residual < 1e-9, "cross-tuple {}", t.cross_tuple_residual);
        assert_abs_diff_eq!(t.energy, m.energy, epsilon = 1e-12 * m.energy.abs());
        assert_abs_diff_eq!(
            t.delta_slope,
            -(nf + 1.0) / 4.0 * nf * cbar / (r * r),
            epsilon = 1e-9 * t.delta_slope.abs()
        );

        // Quadratic force closed forms for the radial and mixed classes.
        let qf = &t.quadratic_force;
        assert_abs_diff_eq!(
            qf.rr[0],
            0.75 * cbar / r.powi(4) + 1.0 + lambda * (nf - 1.0),
            epsilon = 1e-8
        );
        assert_abs_diff_eq!(qf.rr[1], -lambda * g, epsilon = 1e-8);
        assert_abs_diff_eq!(
            qf.gr[0],
            cbar * beta / (2.0 * r.powi(3)) - lambda * r,
            epsilon = 1e-8
        );
        assert_abs_diff_eq!(qf.gr[1], beta * beta / (2.0 * r.powi(3)), epsilon = 1e-8);
        assert_eq!(qf.rg, qf.gr);

        // Angular quadratic classes against inverse-matrix calculus: the
        // inverse responds to one angle cosine through
        // dB_ka = -(B_kc B_da + B_kd B_ca).
        let b = |i: usize, j: usize| if i == j { cbar } else { beta };
        let db = |k: usize, a: usize, c: usize, d: usize| {
            -(b(k, c) * b(d, a) + b(k, d) * b(c, a))
        };
        let gg_oracle = |a: usize, bb: usize, c: usize, d: usize| {
            let mut sum = 0.0;
            for k in 0..6 {
                sum += db(k, a, c, d) * b(k, bb) + b(k, a) * db(k, bb, c, d);
            }
            -sum / (4.0 * r * r)
        };
        assert_abs_diff_eq!(qf.gg[0], gg_oracle(0, 1, 0, 1), epsilon = 1e-8);
        assert_abs_diff_eq!(qf.gg[1], gg_oracle(0, 1, 1, 2), epsilon = 1e-8);
        assert_abs_diff_eq!(qf.gg[2], gg_oracle(0, 1, 2, 3), epsilon = 1e-8);

        // Metric values at the symmetric point.
        let qk = &t.quadratic_kinetic;
        assert_eq!(qk.rr, [1.0, 0.0]);
        assert_eq!(qk.gr, [0.0, 0.0]);
        assert_abs_diff_eq!(qk.gg[0], 2.0 * (1.0 - g * g) / (r * r), epsilon = 1e-12);
        assert_abs_diff_eq!(qk.gg[1], (g - g * g) / (r * r), epsilon = 1e-12);
        assert_eq!(qk.gg[2], 0.0);

        // Rank-one force: coordinate derivatives of the dimension slope.
        let f1 = t.scalars.force1;
        assert_abs_diff_eq!(
            f1.radial,
            (nf + 1.0) / 2.0 * cbar / r.powi(3),
            epsilon = 1e-8 * f1.radial.abs()
        );
        let pair_sum = 2.0 * cbar * beta + (nf - 2.0) * beta * beta;
        assert_abs_diff_eq!(
            f1.angular,
            (nf + 1.0) / 2.0 * pair_sum / (r * r),
            epsilon = 1e-8 * f1.angular.abs().max(1e-3)
        );

        // Cubic force: radial classes are elementary; the quartic trap
        // and interaction drop out of third radial derivatives.
        let f3 = &t.scalars.force3;
        let rrr = -3.0 * cbar / r.powi(5);
        assert_abs_diff_eq!(
            f3.get(GraphId::new(Block::Rrr, 0)),
            rrr,
            epsilon = 1e-7 * rrr.abs()
        );
        assert_eq!(f3.get(GraphId::new(Block::Rrr, 1)), 0.0);
        assert_eq!(f3.get(GraphId::new(Block::Rrr, 2)), 0.0);
        // Mixed class with both radii on the coordinate edge: only the
        // interaction term survives three mixed derivatives.
        assert_abs_diff_eq!(
            f3.get(GraphId::new(Block::GammaRr, 1)),
            -lambda,
            epsilon = 1e-8
        );
        // Two edges sharing the differentiated radius: pure barrier term.
        let ggr = (db(0, 0, 0, 2) * beta + cbar * db(0, 1, 0, 2)) / (2.0 * r.powi(3));
        assert_abs_diff_eq!(
            f3.get(GraphId::new(Block::GammaGammaR, 2)),
            ggr,
            epsilon = 1e-7 * ggr.abs().max(1e-3)
        );

        // Cubic kinetic: exactly the metric-derivative classes survive.
        let k3 = &t.scalars.kinetic3;
        let expect = [
            (GraphId::new(Block::GammaGammaR, 0), -2.0 * (1.0 - g * g) / r.powi(3)),
            (GraphId::new(Block::GammaGammaR, 2), -2.0 * (g - g * g) / r.powi(3)),
            (GraphId::new(Block::GammaGammaGamma, 0), -4.0 * g / (r * r)),
            (GraphId::new(Block::GammaGammaGamma, 1), 1.0 / (r * r)),
            (GraphId::marked(Block::GammaGammaGamma, 2), -g / (r * r)),
        ];
        for (id, value) in expect {
            let got = k3.get(id);
            assert!(
                (got - value).abs() < 1e-8 * value.abs().max(1.0),
                "{id:?}: {got} vs {value}"
            );
        }
        for (id, v) in k3.values() {
            assert!(expect.iter().any(|(e, _)| e == id), "unexpected kinetic scalar {id:?} = {v}");
        }

        // Rank-one kinetic from the contraction.
        let k1 = t.scalars.kinetic1;
        assert_eq!(k1.radial, 0.0);
        assert_abs_diff_eq!(
            k1.angular,
            -2.0 * nf * g / (r * r),
            epsilon = 1e-7 * k1.angular.abs().max(1e-3)
        );

        // Harmonically interacting oscillators are exactly solvable, and
        // the five roots collapse onto three values: the doubled trap
        // frequency, the doubled shifted frequency, and their mean.
        let sol = normal_modes(t, n).unwrap();
        let (w_trap, w_rel) = (1.0f64.sqrt(), (1.0 + nf * lambda).sqrt());
        let expect = [
            (Mode::ZeroPlus, 2.0 * w_rel),
            (Mode::ZeroMinus, 2.0 * w_trap),
            (Mode::OnePlus, 2.0 * w_rel),
            (Mode::OneMinus, w_trap + w_rel),
            (Mode::Two, 2.0 * w_rel),
        ];
        for (mode, omega) in expect {
            assert_abs_diff_eq!(sol.omega_of(mode), omega, epsilon = 1e-7);
        }
        assert_eq!(Mode::ALL.iter().map(|m| m.dim(n)).sum::<usize>(), n.num_coords());
    }

    #[test]
    fn extraction_order_contract() {
        let n = pc(4);
        let model = hh(1.0, 0.1);
        let minimum = find_minimum(&model, n).unwrap();
        let harmonic_only = extract_taylor(&model, &minimum, n, 0).unwrap();
        assert!(harmonic_only.scalars.force3.values().is_empty());
        assert!(harmonic_only.scalars.kinetic3.values().is_empty());
        assert_eq!(harmonic_only.scalars.force1, LinearScalars::default());
        assert!(extract_taylor(&model, &minimum, n, 2).is_err());
    }

    #[test]
    fn model_files_parse_and_round_trip() {
        let text =
            r#"{"conf": {"type": "harmonic", "k": 1.0}, "int": {"type": "harmonic", "lambda": 0.05}}"#;
        match ModelSpec::from_json(text).unwrap() {
            ModelSpec::Potential(p) => {
                assert_eq!(p.conf, Confining::Harmonic { k: 1.0 });
                assert_eq!(p.int, Interaction::Harmonic { lambda: 0.05 });
            }
            other => panic!("expected a potential model, got {other:?}"),
        }

        match ModelSpec::from_json(r#"{"conf": {"type": "harmonic", "k": 2.0}}"#).unwrap() {
            ModelSpec::Potential(p) => assert_eq!(p.int, Interaction::None),
            other => panic!("expected a potential model, got {other:?}"),
        }

        assert!(ModelSpec::from_json(r#"{"cnf": {"type": "harmonic", "k": 1.0}}"#).is_err());
        assert!(
            ModelSpec::from_json(r#"{"conf": {"type": "harmonic", "k": 1.0}, "extra": 3}"#)
                .is_err()
        );

        let synth = r#"{"synthetic": {"energy": 2.5, "cubic_force": {"rrr-a": -1.25}}}"#;
        let spec = ModelSpec::from_json(synth).unwrap();
        let round = serde_json::to_string(&spec).unwrap();
        let again = ModelSpec::from_json(&round).unwrap();
        assert_eq!(again, spec);

        let system = build_system(&spec, pc(5)).unwrap();
        assert!(system.minimum.is_none());
        assert_eq!(system.taylor.energy, 2.5);
        assert_eq!(system.taylor.scalars.force3.get(GraphId::new(Block::Rrr, 0)), -1.25);
        assert_eq!(system.taylor.quadratic_force.rr, [1.0, 0.0]);

        // A scalar on a graph with no members at this N is rejected.
        let empty = r#"{"synthetic": {"cubic_force": {"ggg-h": 0.5}}}"#;
        let spec = ModelSpec::from_json(empty).unwrap();
        assert!(build_system(&spec, pc(5)).is_err());
        assert!(build_system(&spec, pc(6)).is_ok());

        assert!(ModelSpec::builtin("harmonic-harmonic").is_some());
        let default_synth = ModelSpec::builtin("synthetic").unwrap();
        let system = build_system(&default_synth, pc(5)).unwrap();
        assert_eq!(system.taylor.scalars.kinetic1, LinearScalars::default());
        assert!(ModelSpec::builtin("square-well").is_none());
    }
}
