//! First anharmonic order: reduction of the cubic Hamiltonian terms to a
//! handful of sector coupling coefficients, their transformation to normal
//! modes, and the first-order wavefunction correction.
//!
//! The cubic potential tensor is fully symmetric, so one scalar per graph
//! class (in the canonical pair-slots-first layout) determines the whole
//! tensor; mixed-kind blocks recur in three slot arrangements, accounted
//! for by a multiplicity in the reduction. The cubic kinetic tensor has a
//! distinguished coordinate slot and two symmetric derivative slots. The
//! metric is kind-diagonal, so the derivative slots always share a kind:
//! the coordinate slot is the odd-kind slot in mixed blocks and the first
//! slot in uniform ones, and only the doubled-edge-plus-incident
//! all-angular class needs the marked (coordinate-on-doubled-edge)
//! refinement to resolve an ambiguity.
//!
//! The chain: graph scalars -> per-sector reduced coefficients (beta
//! tables) -> normal-mode coefficients (frequency mixing) -> effective
//! cubic polynomial of the first-order Hamiltonian acting on the ground
//! Gaussian -> first-order wavefunction correction by matching Euler and
//! trace terms. A dense route through the full tensors backs all of it as
//! an oracle.

use crate::binary_transform::{analytic_beta, beta_keys, working_beta, BetaKey};
use crate::clebsch::{CgContext, CouplingKey, CouplingVariant, Tensor3};
use crate::coordinates::ParticleCount;
use crate::error::{Error, Result};
use crate::fgmethod::{Mode, NormalModeSolution};
use crate::graphs::{catalog, derivative_catalog, BinaryInvariant, Block, GraphId, SlotKind};
use crate::symmetry::{CoordKind, Irrep, SectorLabel, WMatrix};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

const RANK3_BLOCKS: [Block; 4] =
    [Block::Rrr, Block::GammaRr, Block::GammaGammaR, Block::GammaGammaGamma];

/// Graphs admissible in the fully symmetric cubic tensor: every rank-3
/// class, plain.
pub fn force_catalog() -> Vec<GraphId> {
    RANK3_BLOCKS.into_iter().flat_map(catalog).collect()
}

/// Graphs admissible in the cubic kinetic tensor: every rank-3 class,
/// with the marked refinement replacing the ambiguous all-angular class.
pub fn kinetic_catalog() -> Vec<GraphId> {
    RANK3_BLOCKS.into_iter().flat_map(derivative_catalog).collect()
}

fn validate_keys(values: &BTreeMap<GraphId, f64>, allowed: &[GraphId], what: &str) -> Result<()> {
    for id in values.keys() {
        if !allowed.contains(id) {
            return Err(Error::InputError(format!(
                "graph {id} is not admissible in the {what} catalog"
            )));
        }
    }
    Ok(())
}

/// Scalar coefficients of the cubic potential tensor, one per graph class.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CubicForce {
    values: BTreeMap<GraphId, f64>,
}

impl CubicForce {
    pub fn new(values: BTreeMap<GraphId, f64>) -> Result<Self> {
        validate_keys(&values, &force_catalog(), "cubic potential")?;
        Ok(CubicForce { values })
    }

    pub fn zero() -> Self {
        CubicForce::default()
    }

    pub fn get(&self, id: GraphId) -> f64 {
        self.values.get(&id).copied().unwrap_or(0.0)
    }

    pub fn values(&self) -> &BTreeMap<GraphId, f64> {
        &self.values
    }
}

/// Scalar coefficients of the cubic kinetic tensor, one per graph class of
/// the derivative catalog.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CubicKinetic {
    values: BTreeMap<GraphId, f64>,
}

impl CubicKinetic {
    pub fn new(values: BTreeMap<GraphId, f64>) -> Result<Self> {
        validate_keys(&values, &kinetic_catalog(), "cubic kinetic")?;
        Ok(CubicKinetic { values })
    }

    pub fn zero() -> Self {
        CubicKinetic::default()
    }

    pub fn get(&self, id: GraphId) -> f64 {
        self.values.get(&id).copied().unwrap_or(0.0)
    }

    pub fn values(&self) -> &BTreeMap<GraphId, f64> {
        &self.values
    }

    /// Contraction of the coordinate slot against the first derivative
    /// slot onto a radial remainder: only all-radial classes with a
    /// doubled first pair survive.
    pub fn contracted_radial(&self, n: ParticleCount) -> f64 {
        let nf = n.get() as f64;
        self.get(GraphId::new(Block::Rrr, 0)) + (nf - 1.0) * self.get(GraphId::new(Block::Rrr, 1))
    }

    /// Contraction of the coordinate slot against the first derivative
    /// slot onto an angular remainder: only all-angular classes with a
    /// doubled edge covering the coordinate slot survive.
    pub fn contracted_angular(&self, n: ParticleCount) -> f64 {
        let nf = n.get() as f64;
        self.get(GraphId::new(Block::GammaGammaGamma, 0))
            + 2.0 * (nf - 2.0) * self.get(GraphId::marked(Block::GammaGammaGamma, 2))
            + 0.5 * (nf - 2.0) * (nf - 3.0) * self.get(GraphId::new(Block::GammaGammaGamma, 5))
    }
}

/// Graph-keyed scalar maps serialize with the graph's display name as the
/// key so they survive JSON, which requires string map keys.
macro_rules! string_keyed_serde {
    ($t:ident) => {
        impl Serialize for $t {
            fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
                s.collect_map(self.values.iter().map(|(k, v)| (k.to_string(), *v)))
            }
        }
        impl<'de> Deserialize<'de> for $t {
            fn deserialize<D: serde::Deserializer<'de>>(
                d: D,
            ) -> std::result::Result<Self, D::Error> {
                let raw = BTreeMap::<String, f64>::deserialize(d)?;
                let mut values = BTreeMap::new();
                for (k, v) in raw {
                    let id = GraphId::parse(&k).map_err(serde::de::Error::custom)?;
                    values.insert(id, v);
                }
                $t::new(values).map_err(serde::de::Error::custom)
            }
        }
    };
}

string_keyed_serde!(CubicForce);
string_keyed_serde!(CubicKinetic);

/// Rank-one coefficients: one value on every radial slot, one on every
/// angular slot.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LinearScalars {
    pub radial: f64,
    pub angular: f64,
}

/// The complete first-order input data: rank-one and rank-three scalars
/// for the potential and kinetic sides.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct QScalars {
    pub force1: LinearScalars,
    pub kinetic1: LinearScalars,
    pub force3: CubicForce,
    pub kinetic3: CubicKinetic,
}

impl QScalars {
    /// A nonzero scalar on a graph that has no members at this N is an
    /// input mistake, not a quantity to drop silently.
    pub fn validate_for(&self, n: ParticleCount) -> Result<()> {
        for (map, what) in [
            (self.force3.values(), "cubic potential"),
            (self.kinetic3.values(), "cubic kinetic"),
        ] {
            for (&id, &q) in map {
                if q != 0.0 && BinaryInvariant::new(id, n).count() == 0 {
                    return Err(Error::InputError(format!(
                        "{what} scalar on {id} requires more than {} particles",
                        n.get()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// A rank-3 invariant tensor reduced to sector coefficients: one scalar
/// per (block, ordered sector triple, variant).
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ReducedCubic {
    pub entries: BTreeMap<(Block, [Irrep; 3], CouplingVariant), f64>,
}

fn reduce_over(
    graphs_of: impl Fn(Block) -> Vec<GraphId>,
    value: impl Fn(GraphId) -> f64,
    n: ParticleCount,
) -> Result<ReducedCubic> {
    let mut out = ReducedCubic::default();
    for block in RANK3_BLOCKS {
        for key in beta_keys(block, n) {
            let BetaKey::Rank3(alphas, variant) = key else { continue };
            let mut total = 0.0;
            for id in graphs_of(block) {
                let q = value(id);
                if q == 0.0 {
                    continue;
                }
                if BinaryInvariant::new(id, n).count() == 0 {
                    return Err(Error::InputError(format!(
                        "scalar on {id} requires more than {} particles",
                        n.get()
                    )));
                }
                let beta = working_beta(id, key, n)?.ok_or_else(|| {
                    Error::InputError(format!("no table cell for {id} at key {key}"))
                })?;
                total += q * beta;
            }
            if total != 0.0 {
                out.entries.insert((block, alphas, variant), total);
            }
        }
    }
    Ok(out)
}

/// Sector reduction of the cubic potential tensor.
pub fn reduce_cubic_force(force: &CubicForce, n: ParticleCount) -> Result<ReducedCubic> {
    reduce_over(catalog, |id| force.get(id), n)
}

/// Sector reduction of the cubic kinetic tensor.
pub fn reduce_cubic_kinetic(kinetic: &CubicKinetic, n: ParticleCount) -> Result<ReducedCubic> {
    reduce_over(derivative_catalog, |id| kinetic.get(id), n)
}

/// Normal-mode cubic coefficients keyed by ordered mode triple and
/// coupling variant; source blocks are merged (their basis polynomials
/// coincide once sectors and variant agree).
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ModeCubic {
    pub entries: BTreeMap<([Mode; 3], CouplingVariant), f64>,
}

/// Kinetic coefficients keep their source block: the placement of the
/// derivative slots differs between blocks.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct KineticModeCubic {
    pub entries: BTreeMap<(Block, [Mode; 3], CouplingVariant), f64>,
}

/// Column of a species inside a sector's mixing matrix.
fn species_column(alpha: Irrep, kind: CoordKind) -> usize {
    match (alpha, kind) {
        (Irrep::Two, CoordKind::Angular) => 0,
        (_, CoordKind::Radial) => 0,
        (_, CoordKind::Angular) => 1,
    }
}

fn sector_modes(alpha: Irrep) -> &'static [Mode] {
    match alpha {
        Irrep::Zero => &[Mode::ZeroPlus, Mode::ZeroMinus],
        Irrep::One => &[Mode::OnePlus, Mode::OneMinus],
        Irrep::Two => &[Mode::Two],
    }
}

fn slot_kind(block: Block, slot: usize) -> CoordKind {
    match block.slot_kinds()[slot] {
        SlotKind::Pair => CoordKind::Angular,
        SlotKind::Radial => CoordKind::Radial,
    }
}

/// Coordinate-like slots mix with the inverse of the sector mixing
/// matrix, derivative slots with the mixing matrix itself.
fn mix_factor(
    sol: &NormalModeSolution,
    alpha: Irrep,
    kind: CoordKind,
    mode: Mode,
    derivative: bool,
) -> f64 {
    let col = species_column(alpha, kind);
    let row = mode.sector_row();
    if derivative {
        sol.cmix[&alpha][(row, col)]
    } else {
        sol.cmix_inv[&alpha][(col, row)]
    }
}

/// Number of kind arrangements a canonical block stands for inside a
/// fully symmetric tensor.
fn arrangement_multiplicity(block: Block) -> f64 {
    match block {
        Block::Rrr | Block::GammaGammaGamma => 1.0,
        Block::GammaRr | Block::GammaGammaR => 3.0,
        _ => unreachable!("rank-3 blocks only"),
    }
}

/// Index of the coordinate slot in a kinetic block's canonical layout:
/// the odd-kind slot for mixed blocks, the first slot otherwise.
pub(crate) fn kinetic_coordinate_slot(block: Block) -> usize {
    match block {
        Block::GammaGammaR => 2,
        Block::Rrr | Block::GammaRr | Block::GammaGammaGamma => 0,
        _ => unreachable!("rank-3 blocks only"),
    }
}

pub(crate) fn kinetic_derivative_slots(block: Block) -> (usize, usize) {
    match kinetic_coordinate_slot(block) {
        0 => (1, 2),
        2 => (0, 1),
        _ => unreachable!(),
    }
}

/// Mixes the reduced potential coefficients into normal-mode
/// coefficients, folding in the kind-arrangement multiplicity.
pub fn mix_force_to_modes(reduced: &ReducedCubic, sol: &NormalModeSolution) -> ModeCubic {
    let mut out = ModeCubic::default();
    for (&(block, alphas, variant), &sigma) in &reduced.entries {
        let mult = arrangement_multiplicity(block);
        for &m0 in sector_modes(alphas[0]) {
            for &m1 in sector_modes(alphas[1]) {
                for &m2 in sector_modes(alphas[2]) {
                    let modes = [m0, m1, m2];
                    let factor: f64 = (0..3)
                        .map(|s| mix_factor(sol, alphas[s], slot_kind(block, s), modes[s], false))
                        .product();
                    *out.entries.entry((modes, variant)).or_insert(0.0) += mult * sigma * factor;
                }
            }
        }
    }
    out.entries.retain(|_, v| v.abs() > 0.0);
    out
}

/// Mixes the reduced kinetic coefficients into normal-mode coefficients.
pub fn mix_kinetic_to_modes(reduced: &ReducedCubic, sol: &NormalModeSolution) -> KineticModeCubic {
    let mut out = KineticModeCubic::default();
    for (&(block, alphas, variant), &sigma) in &reduced.entries {
        let coord = kinetic_coordinate_slot(block);
        for &m0 in sector_modes(alphas[0]) {
            for &m1 in sector_modes(alphas[1]) {
                for &m2 in sector_modes(alphas[2]) {
                    let modes = [m0, m1, m2];
                    let factor: f64 = (0..3)
                        .map(|s| {
                            mix_factor(sol, alphas[s], slot_kind(block, s), modes[s], s != coord)
                        })
                        .product();
                    *out.entries.entry((block, modes, variant)).or_insert(0.0) += sigma * factor;
                }
            }
        }
    }
    out.entries.retain(|_, v| v.abs() > 0.0);
    out
}

/// Partial trace of a coupling tensor over two slots; returns the vector
/// over the remaining slot's index.
fn coupling_trace(
    ctx: &CgContext,
    alphas: [Irrep; 3],
    variant: CouplingVariant,
    s1: usize,
    s2: usize,
) -> Result<Vec<f64>> {
    let rem = 3 - s1 - s2;
    let tensor = ctx.tensor(CouplingKey::with_variant(alphas, variant))?;
    let mut out = vec![0.0; alphas[rem].dim(ctx.n())];
    for (idx, v) in tensor.iter() {
        if idx[s1] == idx[s2] {
            out[idx[rem]] += v;
        }
    }
    Ok(out)
}

/// The cubic-plus-linear polynomial equivalent to the first-order
/// Hamiltonian acting on the ground Gaussian, in normal coordinates.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct EffectiveCubic {
    pub cubic: ModeCubic,
    pub linear: BTreeMap<Mode, f64>,
}

/// Rank-one sector reduction: only the symmetric sector survives.
fn rank1_beta(kind: CoordKind, n: ParticleCount) -> f64 {
    let block = match kind {
        CoordKind::Radial => Block::R,
        CoordKind::Angular => Block::Gamma,
    };
    analytic_beta(GraphId::new(block, 0), BetaKey::Rank1(Irrep::Zero), n)
        .expect("rank-one key shape is valid")
        .expect("symmetric cell always present")
}

/// Builds the effective polynomial of the first-order Hamiltonian on the
/// ground Gaussian: cubic coefficients from the potential and kinetic
/// tensors, linear coefficients from derivative traces and the rank-one
/// terms.
pub fn h1_effective(
    q: &QScalars,
    sol: &NormalModeSolution,
    ctx: &CgContext,
) -> Result<EffectiveCubic> {
    let n = sol.n;
    if ctx.n() != n {
        return Err(Error::InputError(format!(
            "coupling context is for N = {}, solution for N = {}",
            ctx.n(),
            n
        )));
    }
    q.validate_for(n)?;
    let tau_f = mix_force_to_modes(&reduce_cubic_force(&q.force3, n)?, sol);
    let tau_g = mix_kinetic_to_modes(&reduce_cubic_kinetic(&q.kinetic3, n)?, sol);

    let mut cubic = ModeCubic::default();
    let mut lin: BTreeMap<Mode, f64> = BTreeMap::new();

    // Potential part: one sixth of the fully symmetric tensor.
    for (&key, &t) in &tau_f.entries {
        *cubic.entries.entry(key).or_insert(0.0) += t / 6.0;
    }

    // Kinetic part: the two derivative slots pick up a frequency each,
    // and their contraction on equal modes leaves a linear trace term in
    // the symmetric sector.
    for (&(block, modes, variant), &t) in &tau_g.entries {
        let coord = kinetic_coordinate_slot(block);
        let (d1, d2) = kinetic_derivative_slots(block);
        let w1 = sol.omega_of(modes[d1]);
        let w2 = sol.omega_of(modes[d2]);
        *cubic.entries.entry((modes, variant)).or_insert(0.0) += -0.5 * t * w1 * w2;
        if modes[d1] == modes[d2] {
            let alphas = modes.map(|m| m.irrep());
            let tr = coupling_trace(ctx, alphas, variant, d1, d2)?;
            if modes[coord].irrep() == Irrep::Zero {
                *lin.entry(modes[coord]).or_insert(0.0) += 0.5 * w1 * t * tr[0];
            } else {
                debug_assert!(
                    tr.iter().all(|v| v.abs() < 1e-9),
                    "derivative trace must vanish outside the symmetric sector"
                );
            }
        }
    }

    // Rank-one terms: the linear potential coefficients enter as
    // coordinates, the contracted kinetic coefficients as derivatives.
    let sigma_f1 = [
        q.force1.radial * rank1_beta(CoordKind::Radial, n),
        q.force1.angular * rank1_beta(CoordKind::Angular, n),
    ];
    let sigma_g1 = [
        q.kinetic1.radial * rank1_beta(CoordKind::Radial, n),
        q.kinetic1.angular * rank1_beta(CoordKind::Angular, n),
    ];
    for mode in [Mode::ZeroPlus, Mode::ZeroMinus] {
        let mut v = 0.0;
        for kind in [CoordKind::Radial, CoordKind::Angular] {
            let col = species_column(Irrep::Zero, kind);
            v += sigma_f1[col] * mix_factor(sol, Irrep::Zero, kind, mode, false);
            v += 0.5
                * sol.omega_of(mode)
                * sigma_g1[col]
                * mix_factor(sol, Irrep::Zero, kind, mode, true);
        }
        if v != 0.0 {
            *lin.entry(mode).or_insert(0.0) += v;
        }
    }

    cubic.entries.retain(|_, v| v.abs() > 0.0);
    lin.retain(|_, v| v.abs() > 0.0);
    Ok(EffectiveCubic { cubic, linear: lin })
}

/// First-order energy shift: the effective polynomial is odd, so its
/// expectation in the even ground Gaussian vanishes identically.
pub fn first_order_energy(_h1: &EffectiveCubic) -> f64 {
    0.0
}

/// First-order wavefunction correction, same shape as the effective
/// Hamiltonian polynomial.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Delta1 {
    pub cubic: ModeCubic,
    pub linear: BTreeMap<Mode, f64>,
}

impl Delta1 {
    /// Evaluates the correction at a point of the flat normal layout and
    /// returns the first-order amplitude factor 1 + sqrt(delta) * value.
    pub fn amplitude(
        &self,
        point: &[f64],
        delta: f64,
        sol: &NormalModeSolution,
        ctx: &CgContext,
    ) -> Result<f64> {
        let n = sol.n;
        if point.len() != n.num_coords() {
            return Err(Error::InputError(format!(
                "point has {} coordinates, layout needs {}",
                point.len(),
                n.num_coords()
            )));
        }
        let mut value = 0.0;
        for (&(modes, variant), &t) in &self.cubic.entries {
            let alphas = modes.map(|m| m.irrep());
            let tensor = ctx.tensor(CouplingKey::with_variant(alphas, variant))?;
            let offs = modes.map(|m| mode_offset(m, n));
            let mut s = 0.0;
            for (idx, v) in tensor.iter() {
                s += v
                    * point[offs[0] + idx[0]]
                    * point[offs[1] + idx[1]]
                    * point[offs[2] + idx[2]];
            }
            value += t * s;
        }
        for (&mode, &c) in &self.linear {
            value += c * point[mode_offset(mode, n)];
        }
        Ok(1.0 + delta.sqrt() * value)
    }
}

/// Solves the commutator condition for the first-order correction: cubic
/// coefficients divide by the frequency sum, and the symmetric-sector
/// linear coefficients balance the Laplacian traces of the cubic part.
pub fn first_order_wavefunction(
    h1: &EffectiveCubic,
    sol: &NormalModeSolution,
    ctx: &CgContext,
) -> Result<Delta1> {
    let mut cubic = ModeCubic::default();
    for (&(modes, variant), &h) in &h1.cubic.entries {
        let wsum: f64 = modes.iter().map(|m| sol.omega_of(*m)).sum();
        if wsum <= 0.0 || wsum.is_nan() {
            return Err(Error::InputError(format!(
                "non-positive frequency sum {wsum} for modes {:?}",
                modes.map(|m| m.label())
            )));
        }
        cubic.entries.insert((modes, variant), -h / wsum);
    }

    // Trace contributions of the cubic part onto each symmetric mode.
    let mut trace_acc: BTreeMap<Mode, f64> = BTreeMap::new();
    for (&(modes, variant), &t) in &cubic.entries {
        let alphas = modes.map(|m| m.irrep());
        for (s1, s2) in [(0usize, 1usize), (0, 2), (1, 2)] {
            if modes[s1] != modes[s2] {
                continue;
            }
            let rem = 3 - s1 - s2;
            if modes[rem].irrep() != Irrep::Zero {
                continue;
            }
            let tr = coupling_trace(ctx, alphas, variant, s1, s2)?;
            *trace_acc.entry(modes[rem]).or_insert(0.0) += t * tr[0];
        }
    }

    let mut linear = BTreeMap::new();
    for mode in [Mode::ZeroPlus, Mode::ZeroMinus] {
        let w = sol.omega_of(mode);
        if w <= 0.0 || w.is_nan() {
            return Err(Error::InputError(format!(
                "non-positive frequency {w} on mode {}",
                mode.label()
            )));
        }
        let h = h1.linear.get(&mode).copied().unwrap_or(0.0);
        let tr = trace_acc.get(&mode).copied().unwrap_or(0.0);
        let v = (tr - h) / w;
        if v != 0.0 {
            linear.insert(mode, v);
        }
    }
    Ok(Delta1 { cubic, linear })
}

// ---------------------------------------------------------------------
// Flat normal-coordinate layout and polynomial utilities.
// ---------------------------------------------------------------------

/// Offset of a mode's first coordinate in the flat normal layout.
pub fn mode_offset(mode: Mode, n: ParticleCount) -> usize {
    let mut off = 0;
    for m in Mode::ALL {
        if m == mode {
            return off;
        }
        off += m.dim(n);
    }
    unreachable!("mode is in the layout")
}

/// One frequency per flat normal coordinate.
pub fn flat_frequencies(sol: &NormalModeSolution) -> Vec<f64> {
    let mut out = Vec::with_capacity(sol.n.num_coords());
    for m in Mode::ALL {
        out.extend(std::iter::repeat_n(sol.omega_of(m), m.dim(sol.n)));
    }
    out
}

/// Sparse polynomial over the flat normal coordinates, exponent-keyed.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct QPolynomial {
    dims: usize,
    terms: BTreeMap<Vec<u16>, f64>,
}

impl QPolynomial {
    pub fn zero(dims: usize) -> Self {
        QPolynomial { dims, terms: BTreeMap::new() }
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn terms(&self) -> &BTreeMap<Vec<u16>, f64> {
        &self.terms
    }

    /// Adds `coeff` times the monomial with the given variables (repeats
    /// allowed, order irrelevant).
    pub fn add_monomial(&mut self, vars: &[usize], coeff: f64) {
        if coeff == 0.0 {
            return;
        }
        let mut expts = vec![0u16; self.dims];
        for &v in vars {
            expts[v] += 1;
        }
        let slot = self.terms.entry(expts).or_insert(0.0);
        *slot += coeff;
        if *slot == 0.0 {
            self.remove_zero();
        }
    }

    fn remove_zero(&mut self) {
        self.terms.retain(|_, v| *v != 0.0);
    }

    pub fn amax(&self) -> f64 {
        self.terms.values().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Largest absolute coefficient difference, over the union of terms.
    pub fn sub_amax(&self, other: &QPolynomial) -> f64 {
        let mut worst = 0.0f64;
        for (k, v) in &self.terms {
            worst = worst.max((v - other.terms.get(k).copied().unwrap_or(0.0)).abs());
        }
        for (k, v) in &other.terms {
            if !self.terms.contains_key(k) {
                worst = worst.max(v.abs());
            }
        }
        worst
    }

    pub fn eval(&self, point: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(e, c)| {
                c * e
                    .iter()
                    .zip(point)
                    .map(|(&p, x)| x.powi(p as i32))
                    .product::<f64>()
            })
            .sum()
    }

    /// Applies the weighted Euler operator sum_v w_v x_v d/dx_v.
    pub fn euler(&self, weights: &[f64]) -> QPolynomial {
        let mut out = QPolynomial::zero(self.dims);
        for (e, c) in &self.terms {
            let scale: f64 = e.iter().zip(weights).map(|(&p, w)| p as f64 * w).sum();
            if scale != 0.0 {
                out.terms.insert(e.clone(), c * scale);
            }
        }
        out
    }

    /// Plain Laplacian sum_v d^2/dx_v^2.
    pub fn laplacian(&self) -> QPolynomial {
        let mut out = QPolynomial::zero(self.dims);
        for (e, c) in &self.terms {
            for v in 0..self.dims {
                if e[v] >= 2 {
                    let mut e2 = e.clone();
                    e2[v] -= 2;
                    let factor = (e[v] as f64) * (e[v] as f64 - 1.0);
                    *out.terms.entry(e2).or_insert(0.0) += c * factor;
                }
            }
        }
        out.remove_zero();
        out
    }

    pub fn scaled(&self, s: f64) -> QPolynomial {
        let mut out = self.clone();
        for v in out.terms.values_mut() {
            *v *= s;
        }
        out.remove_zero();
        out
    }

    pub fn sub(&self, other: &QPolynomial) -> QPolynomial {
        let mut out = self.clone();
        for (k, v) in &other.terms {
            *out.terms.entry(k.clone()).or_insert(0.0) -= v;
        }
        out.remove_zero();
        out
    }
}

/// Exact polynomial coefficients of (H0 (p * Phi0))/Phi0 - E0 * p for the
/// ground Gaussian of the given frequencies: the Euler term minus half
/// the Laplacian.
pub fn apply_h0_to_poly_gaussian(poly: &QPolynomial, omega: &[f64]) -> QPolynomial {
    poly.euler(omega).sub(&poly.laplacian().scaled(0.5))
}

/// Expands mode-keyed cubic and linear coefficients into an explicit
/// polynomial over the flat normal coordinates.
pub fn expand_polynomial(
    cubic: &ModeCubic,
    linear: &BTreeMap<Mode, f64>,
    sol: &NormalModeSolution,
    ctx: &CgContext,
) -> Result<QPolynomial> {
    let n = sol.n;
    let mut poly = QPolynomial::zero(n.num_coords());
    for (&(modes, variant), &t) in &cubic.entries {
        let alphas = modes.map(|m| m.irrep());
        let tensor = ctx.tensor(CouplingKey::with_variant(alphas, variant))?;
        let offs = modes.map(|m| mode_offset(m, n));
        for (idx, v) in tensor.iter() {
            poly.add_monomial(&[offs[0] + idx[0], offs[1] + idx[1], offs[2] + idx[2]], t * v);
        }
    }
    for (&mode, &c) in linear {
        poly.add_monomial(&[mode_offset(mode, n)], c);
    }
    Ok(poly)
}

// ---------------------------------------------------------------------
// Dense route: full tensors and the first-order polynomial from first
// principles, used as an oracle for the reduced chain.
// ---------------------------------------------------------------------

/// Dense fully symmetric cubic potential tensor in the flat internal
/// layout.
pub fn dense_force_tensor(force: &CubicForce, n: ParticleCount) -> Tensor3 {
    let p = n.num_coords();
    let mut t = Tensor3::zeros([p, p, p]);
    for (&id, &q) in force.values() {
        if q == 0.0 {
            continue;
        }
        for tuple in BinaryInvariant::new(id, n).member_offsets() {
            // All kind arrangements of the canonical tuple carry the same
            // value; same-kind orderings are already in the member list.
            for perm in kind_arrangements(id.block) {
                *t.at_mut([tuple[perm[0]], tuple[perm[1]], tuple[perm[2]]]) = q;
            }
        }
    }
    t
}

/// Distinct slot arrangements of a block's canonical kind layout.
fn kind_arrangements(block: Block) -> Vec<[usize; 3]> {
    match block {
        Block::Rrr | Block::GammaGammaGamma => vec![[0, 1, 2]],
        // One odd-kind slot among three: it can sit anywhere.
        Block::GammaRr => vec![[0, 1, 2], [1, 0, 2], [1, 2, 0]],
        Block::GammaGammaR => vec![[0, 1, 2], [0, 2, 1], [2, 0, 1]],
        _ => unreachable!("rank-3 blocks only"),
    }
}

/// Dense cubic kinetic tensor, coordinate slot first, derivative slots
/// second and third.
pub fn dense_kinetic_tensor(kinetic: &CubicKinetic, n: ParticleCount) -> Tensor3 {
    let p = n.num_coords();
    let mut t = Tensor3::zeros([p, p, p]);
    for (&id, &q) in kinetic.values() {
        if q == 0.0 {
            continue;
        }
        let coord = kinetic_coordinate_slot(id.block);
        for tuple in BinaryInvariant::new(id, n).member_offsets() {
            // Member tuples come in canonical slot order; move the
            // coordinate slot to the front. Same-kind orderings in the
            // member list supply the derivative-slot symmetry, and the
            // marked class enumerates exactly the arrangements with the
            // doubled edge in the coordinate slot.
            let (d1, d2) = kinetic_derivative_slots(id.block);
            *t.at_mut([tuple[coord], tuple[d1], tuple[d2]]) = q;
        }
    }
    t
}

/// Dense rank-one vector: one value per radial slot, one per angular.
pub fn dense_linear_vector(s: &LinearScalars, n: ParticleCount) -> DVector<f64> {
    DVector::from_fn(n.num_coords(), |i, _| if i < n.n() { s.radial } else { s.angular })
}

/// Contraction of the dense cubic kinetic tensor over the coordinate and
/// first derivative slots; oracle for the closed-form contractions.
pub fn contract_kinetic_linear(kinetic: &CubicKinetic, n: ParticleCount) -> DVector<f64> {
    let t = dense_kinetic_tensor(kinetic, n);
    let p = n.num_coords();
    DVector::from_fn(p, |k, _| (0..p).map(|v| t.at([v, v, k])).sum())
}

/// The linear maps between displacement and normal coordinates:
/// `y' = A q` and `q = A_inv y'`, assembled from the symmetry transform
/// and the per-sector mixing matrices.
pub fn normal_coordinate_maps(
    sol: &NormalModeSolution,
    w: &WMatrix,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = sol.n;
    let p = n.num_coords();
    let mut mix = DMatrix::zeros(p, p);
    let mut mix_inv = DMatrix::zeros(p, p);
    for mode in Mode::ALL {
        let alpha = mode.irrep();
        let off = mode_offset(mode, n);
        let row = mode.sector_row();
        let kinds: &[CoordKind] = match alpha {
            Irrep::Two => &[CoordKind::Angular],
            _ => &[CoordKind::Radial, CoordKind::Angular],
        };
        for &kind in kinds {
            let col = species_column(alpha, kind);
            let sector = SectorLabel::new(alpha, kind).unwrap();
            let soff = w.sector_offset(sector);
            for xi in 0..mode.dim(n) {
                mix[(off + xi, soff + xi)] = sol.cmix[&alpha][(row, col)];
                mix_inv[(soff + xi, off + xi)] = sol.cmix_inv[&alpha][(col, row)];
            }
        }
    }
    let wfull = w.assemble_full();
    let a = wfull.transpose() * &mix_inv;
    let a_inv = &mix * wfull;
    (a, a_inv)
}

/// Builds the effective first-order polynomial directly from the dense
/// tensors, transforming them to normal coordinates and applying the
/// Gaussian derivative rules.
pub fn h1_dense_polynomial(q: &QScalars, sol: &NormalModeSolution, w: &WMatrix) -> QPolynomial {
    let n = sol.n;
    let p = n.num_coords();
    let (a, a_inv) = normal_coordinate_maps(sol, w);
    let at = a.transpose();
    let omega = flat_frequencies(sol);

    let tf = dense_force_tensor(&q.force3, n)
        .mode_mul(0, &at)
        .mode_mul(1, &at)
        .mode_mul(2, &at);
    let tg = dense_kinetic_tensor(&q.kinetic3, n)
        .mode_mul(0, &at)
        .mode_mul(1, &a_inv)
        .mode_mul(2, &a_inv);
    let tf1 = &at * dense_linear_vector(&q.force1, n);
    let tg1 = &a_inv * dense_linear_vector(&q.kinetic1, n);

    let mut poly = QPolynomial::zero(p);
    for i in 0..p {
        for j in 0..p {
            for k in 0..p {
                let f = tf.at([i, j, k]);
                if f != 0.0 {
                    poly.add_monomial(&[i, j, k], f / 6.0);
                }
                let g = tg.at([i, j, k]);
                if g != 0.0 {
                    poly.add_monomial(&[i, j, k], -0.5 * g * omega[j] * omega[k]);
                }
            }
        }
    }
    for c in 0..p {
        let trace: f64 = (0..p).map(|d| tg.at([c, d, d]) * omega[d]).sum();
        poly.add_monomial(&[c], 0.5 * trace);
        poly.add_monomial(&[c], 0.5 * tg1[c] * omega[c]);
        poly.add_monomial(&[c], tf1[c]);
    }
    poly
}
