//! The built-in verification suite behind `snbody check`: each check
//! recomputes one structural property from scratch and reports a residual
//! against its documented bound. Checks are independent and run on a
//! thread pool capped by `SNBODY_THREADS`; results are reported in the
//! order requested regardless of completion order.

use crate::config::{thread_cap, CheckKind, ModelSource, RunConfig};
use crate::pipeline::run_pipeline;
use crate::CliResult;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use snbody_core::{
    apply_h0_to_poly_gaussian, assemble_full, build_system, build_W, catalog, check_invariance,
    coefficients_from_dense, expand_polynomial, expected_spectrum, first_order_energy,
    first_order_wavefunction, flat_frequencies, force_catalog, h1_dense_polynomial, h1_effective,
    kinetic_catalog, solve_sectors, working_beta, BetaKey, BinaryInvariant, Block, CgContext,
    CouplingKey, CouplingVariant, CubicForce, CubicKinetic, FgCoefficients, Irrep,
    LinearScalars, Mode, ModelSpec, ParticleCount, QScalars, Tensor3,
};
use snbody_core::{beta_keys, bw_rank1, bw_rank3, verify_tables};
use std::collections::BTreeMap;
use std::fmt;

/// Outcome of one check.
#[derive(Clone, Debug)]
pub struct CheckLine {
    pub name: &'static str,
    pub passed: bool,
    pub residual: f64,
    pub bound: f64,
    pub detail: String,
}

impl fmt::Display for CheckLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed { "pass" } else { "FAIL" };
        if self.residual.is_nan() {
            write!(f, "[{verdict}] {:<16} error: {}", self.name, self.detail)
        } else {
            write!(
                f,
                "[{verdict}] {:<16} residual {:>10.3e} bound {:>8.1e}  {}",
                self.name, self.residual, self.bound, self.detail
            )
        }
    }
}

/// All requested check outcomes, in request order.
#[derive(Clone, Debug)]
pub struct CheckReport {
    pub lines: Vec<CheckLine>,
}

impl CheckReport {
    pub fn all_passed(&self) -> bool {
        self.lines.iter().all(|l| l.passed)
    }
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for line in &self.lines {
            writeln!(f, "{line}")?;
        }
        let failed = self.lines.iter().filter(|l| !l.passed).count();
        write!(f, "{} checks, {} failed", self.lines.len(), failed)
    }
}

/// Runs the selected checks (all of them when the selection is empty).
/// Check failures are reported, never raised.
pub fn run_checks(config: &RunConfig) -> CheckReport {
    let kinds: Vec<CheckKind> = if config.checks.is_empty() {
        CheckKind::ALL.to_vec()
    } else {
        config.checks.clone()
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_cap().unwrap_or(0))
        .build();
    let lines = match pool {
        Ok(pool) => pool.install(|| kinds.par_iter().map(|k| run_one(*k, config)).collect()),
        Err(_) => kinds.iter().map(|k| run_one(*k, config)).collect(),
    };
    CheckReport { lines }
}

fn run_one(kind: CheckKind, config: &RunConfig) -> CheckLine {
    match dispatch(kind, config) {
        Ok((residual, default_bound, detail)) => {
            let bound = config.tolerance.unwrap_or(default_bound);
            CheckLine {
                name: kind.name(),
                passed: residual <= bound,
                residual,
                bound,
                detail,
            }
        }
        Err(e) => CheckLine {
            name: kind.name(),
            passed: false,
            residual: f64::NAN,
            bound: config.tolerance.unwrap_or(0.0),
            detail: e.to_string(),
        },
    }
}

type CheckOutcome = CliResult<(f64, f64, String)>;

fn dispatch(kind: CheckKind, config: &RunConfig) -> CheckOutcome {
    let n = ParticleCount::new(config.n)?;
    match kind {
        CheckKind::Catalog => catalog_check(n),
        CheckKind::WOrthogonality => w_orthogonality(n),
        CheckKind::CgInvariance => cg_invariance(n),
        CheckKind::BetaTables => beta_tables(n),
        CheckKind::Reconstruction => reconstruction(n),
        CheckKind::FgOracle => fg_oracle(n, config.seed),
        CheckKind::FirstOrderEnergy => first_order_energy_check(n, config.seed),
        CheckKind::Commutator => commutator(n, config.seed),
        CheckKind::Model => model_check(config, n),
        CheckKind::Determinism => determinism(config),
    }
}

/// Class counts per block: (2,2,3) harmonic, (1,1,3,5,7,8) first order,
/// twenty-five first-order classes in total.
fn catalog_check(n: ParticleCount) -> CheckOutcome {
    let harmonic = [Block::Rr, Block::GammaR, Block::GammaGamma];
    let first = [
        Block::R,
        Block::Gamma,
        Block::Rrr,
        Block::GammaRr,
        Block::GammaGammaR,
        Block::GammaGammaGamma,
    ];
    let got_h: Vec<usize> = harmonic.iter().map(|b| catalog(*b).len()).collect();
    let got_f: Vec<usize> = first.iter().map(|b| catalog(*b).len()).collect();
    let mut mismatches = 0;
    if got_h != vec![2, 2, 3] {
        mismatches += 1;
    }
    if got_f != vec![1, 1, 3, 5, 7, 8] {
        mismatches += 1;
    }
    let total: usize = got_f.iter().sum();
    if total != 25 {
        mismatches += 1;
    }
    // Membership counts must exhaust each block's tuple space.
    for block in Block::ALL {
        let members: usize = catalog(block)
            .iter()
            .map(|id| BinaryInvariant::new(*id, n).count())
            .sum();
        let rank = block.slot_kinds().len() as u32;
        let radial = block
            .slot_kinds()
            .iter()
            .filter(|k| matches!(k, snbody_core::graphs::SlotKind::Radial))
            .count() as u32;
        let space = (n.n() as usize).pow(radial) * n.num_pairs().pow(rank - radial);
        if members != space {
            mismatches += 1;
        }
    }
    Ok((
        mismatches as f64,
        0.0,
        format!("harmonic {got_h:?}, first-order {got_f:?}, total {total}, N={}", n.get()),
    ))
}

fn w_orthogonality(n: ParticleCount) -> CheckOutcome {
    let w = build_W(n).assemble_full();
    let p = w.nrows();
    let residual = (&w * w.transpose() - nalgebra::DMatrix::identity(p, p)).amax();
    Ok((residual, 1e-10, format!("N={}, P={p}", n.get())))
}

/// Every supported coupling tensor is invariant under the generators.
fn cg_invariance(n: ParticleCount) -> CheckOutcome {
    let mut worst: f64 = 0.0;
    let mut keys = 0;
    for alphas in allowed_triples() {
        let mult = CouplingKey::multiplicity(alphas, n);
        for variant in [CouplingVariant::I, CouplingVariant::II].into_iter().take(mult) {
            let key = CouplingKey::with_variant(alphas, variant);
            worst = worst.max(check_invariance(key, n)?);
            keys += 1;
        }
    }
    Ok((worst, 1e-9, format!("{keys} tensors, N={}", n.get())))
}

fn allowed_triples() -> [[Irrep; 3]; 7] {
    use Irrep::{One, Two, Zero};
    [
        [Zero, Zero, Zero],
        [Zero, One, One],
        [Zero, Two, Two],
        [One, One, One],
        [One, One, Two],
        [One, Two, Two],
        [Two, Two, Two],
    ]
}

fn beta_tables(n: ParticleCount) -> CheckOutcome {
    let rows = verify_tables(n)?;
    let worst = rows
        .iter()
        .max_by(|a, b| a.rel_err.total_cmp(&b.rel_err))
        .expect("tables are never empty");
    Ok((
        worst.rel_err,
        1e-9,
        format!(
            "{} cells, worst {} key {}, N={}",
            rows.len(),
            worst.graph,
            worst.key,
            n.get()
        ),
    ))
}

/// Every first-order graph transform is reproduced elementwise by its
/// coupling-tensor expansion.
fn reconstruction(n: ParticleCount) -> CheckOutcome {
    let w = build_W(n);
    let ctx = CgContext::new(n);
    let mut worst: f64 = 0.0;
    let mut graphs = 0;
    for block in [Block::R, Block::Gamma] {
        for id in catalog(block) {
            graphs += 1;
            let analytic = working_beta(id, BetaKey::Rank1(Irrep::Zero), n)?
                .expect("symmetric cell always present");
            let b = bw_rank1(id, Irrep::Zero, &w)?;
            worst = worst.max((b[0] - analytic).abs());
            for alpha in [Irrep::One, Irrep::Two] {
                if alpha == Irrep::Two && block == Block::R {
                    continue;
                }
                worst = worst.max(bw_rank1(id, alpha, &w)?.amax());
            }
        }
    }
    for block in [Block::Rrr, Block::GammaRr, Block::GammaGammaR, Block::GammaGammaGamma] {
        for id in catalog(block) {
            graphs += 1;
            for key in beta_keys(block, n) {
                let BetaKey::Rank3(alphas, variant) = key else { continue };
                if variant == CouplingVariant::II {
                    continue;
                }
                let b = bw_rank3(id, alphas, &w)?;
                let mut recon = Tensor3::zeros(b.dims);
                let mult = CouplingKey::multiplicity(alphas, n);
                for v in [CouplingVariant::I, CouplingVariant::II].into_iter().take(mult) {
                    let beta = working_beta(id, BetaKey::Rank3(alphas, v), n)?
                        .expect("realized keys have working coefficients");
                    let c = ctx.tensor(CouplingKey::with_variant(alphas, v))?;
                    for (idx, val) in c.iter() {
                        *recon.at_mut(idx) += beta * val;
                    }
                }
                worst = worst.max(recon.sub_amax(&b));
            }
        }
    }
    Ok((worst, 1e-9, format!("{graphs} graphs, N={}", n.get())))
}

/// Random positive-definite invariant forms built as B^T B plus a
/// diagonal shift, for the spectrum and first-order oracles.
fn random_forms(
    rng: &mut ChaCha8Rng,
    n: ParticleCount,
) -> (snbody_core::GCoefficients, snbody_core::GCoefficients) {
    let mut draw = |diag: f64| {
        let mut r = || rng.gen_range(-0.5..0.5);
        let seed = FgCoefficients {
            rr: [r(), r()],
            rg: [r(), r()],
            gr: [r(), r()],
            gg: [r(), r(), r()],
        };
        let b = assemble_full(&seed, n);
        let dense = b.transpose() * &b
            + nalgebra::DMatrix::identity(n.num_coords(), n.num_coords()) * diag;
        coefficients_from_dense(&dense, n)
            .expect("sum of invariant products is invariant")
            .as_symmetric()
            .expect("B^T B is symmetric")
    };
    let f = draw(0.6);
    let g = draw(1.0);
    (f, g)
}

/// Sector solutions against the dense generalized eigenproblem, with the
/// exact (1, 1, N-1, N-1, N(N-3)/2) multiplicities.
fn fg_oracle(n: ParticleCount, seed: u64) -> CheckOutcome {
    const DRAWS: usize = 20;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..DRAWS {
        let (f, g) = random_forms(&mut rng, n);
        let dense_f = assemble_full(&f.as_product(), n);
        let dense_g = assemble_full(&g.as_product(), n);
        let fg = coefficients_from_dense(&(&dense_f * &dense_g), n)?;
        let solution = solve_sectors(&fg, &g, n)?;
        let chol = nalgebra::Cholesky::new(dense_g).expect("drawn kinetic form is definite");
        let a = chol.l().transpose() * dense_f * chol.l();
        let mut dense_eigs: Vec<f64> = nalgebra::SymmetricEigen::new(a).eigenvalues.iter().copied().collect();
        dense_eigs.sort_by(f64::total_cmp);
        let expected = expected_spectrum(&solution);
        if dense_eigs.len() != expected.len() {
            return Ok((f64::INFINITY, 1e-8, "multiplicity mismatch".into()));
        }
        for (a, b) in dense_eigs.iter().zip(&expected) {
            worst = worst.max((a - b).abs() / b.abs().max(1.0));
        }
    }
    Ok((worst, 1e-8, format!("{DRAWS} draws, N={}", n.get())))
}

fn random_solution(
    rng: &mut ChaCha8Rng,
    n: ParticleCount,
) -> CliResult<snbody_core::NormalModeSolution> {
    let (f, g) = random_forms(rng, n);
    let product = assemble_full(&f.as_product(), n) * assemble_full(&g.as_product(), n);
    let fg = coefficients_from_dense(&product, n)?;
    Ok(solve_sectors(&fg, &g, n)?)
}

fn random_scalars(rng: &mut ChaCha8Rng, n: ParticleCount) -> QScalars {
    let mut fmap = BTreeMap::new();
    for id in force_catalog() {
        if BinaryInvariant::new(id, n).count() > 0 {
            fmap.insert(id, rng.gen_range(-1.0..1.0));
        }
    }
    let mut gmap = BTreeMap::new();
    for id in kinetic_catalog() {
        if BinaryInvariant::new(id, n).count() > 0 {
            gmap.insert(id, rng.gen_range(-1.0..1.0));
        }
    }
    QScalars {
        force1: LinearScalars {
            radial: rng.gen_range(-1.0..1.0),
            angular: rng.gen_range(-1.0..1.0),
        },
        kinetic1: LinearScalars {
            radial: rng.gen_range(-1.0..1.0),
            angular: rng.gen_range(-1.0..1.0),
        },
        force3: CubicForce::new(fmap).expect("catalog ids are admissible"),
        kinetic3: CubicKinetic::new(gmap).expect("catalog ids are admissible"),
    }
}

/// The first-order energy: exactly zero analytically, and a Monte Carlo
/// estimate of the ground-state expectation consistent with zero.
fn first_order_energy_check(n: ParticleCount, seed: u64) -> CheckOutcome {
    const SAMPLES: usize = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xE1);
    let sol = random_solution(&mut rng, n)?;
    let q = random_scalars(&mut rng, n);
    let ctx = CgContext::new(n);
    let h1 = h1_effective(&q, &sol, &ctx)?;
    if first_order_energy(&h1) != 0.0 {
        return Ok((f64::INFINITY, 1.0, "analytic value is not exactly zero".into()));
    }
    let poly = expand_polynomial(&h1.cubic, &h1.linear, &sol, &ctx)?;
    let omega = flat_frequencies(&sol);
    let gaussians: Vec<Normal<f64>> = omega
        .iter()
        .map(|w| Normal::new(0.0, (0.5 / w).sqrt()).expect("positive spread"))
        .collect();
    let mut point = vec![0.0; omega.len()];
    let (mut sum, mut sumsq) = (0.0, 0.0);
    for _ in 0..SAMPLES {
        for (x, gaussian) in point.iter_mut().zip(&gaussians) {
            *x = gaussian.sample(&mut rng);
        }
        let v = poly.eval(&point);
        sum += v;
        sumsq += v * v;
    }
    let mean = sum / SAMPLES as f64;
    let var = (sumsq / SAMPLES as f64 - mean * mean).max(0.0);
    let stderr = (var / SAMPLES as f64).sqrt();
    // Residual below one means the estimate sits inside three standard
    // errors of zero.
    let residual = mean.abs() / (3.0 * stderr);
    Ok((
        residual,
        1.0,
        format!("mean {mean:.3e}, 3*stderr {:.3e}, {SAMPLES} samples, N={}", 3.0 * stderr, n.get()),
    ))
}

/// The defining property of the first-order correction: its commutator
/// with the harmonic part reproduces the first-order Hamiltonian on the
/// ground Gaussian.
fn commutator(n: ParticleCount, seed: u64) -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sol = random_solution(&mut rng, n)?;
    let q = random_scalars(&mut rng, n);
    let ctx = CgContext::new(n);
    let w = build_W(n);
    let h1 = h1_effective(&q, &sol, &ctx)?;
    let delta = first_order_wavefunction(&h1, &sol, &ctx)?;
    let dpoly = expand_polynomial(&delta.cubic, &delta.linear, &sol, &ctx)?;
    let omega = flat_frequencies(&sol);
    let lhs = apply_h0_to_poly_gaussian(&dpoly, &omega).scaled(-1.0);
    let rhs = h1_dense_polynomial(&q, &sol, &w);
    let scale = rhs.amax().max(1.0);
    Ok((
        lhs.sub_amax(&rhs) / scale,
        1e-8,
        format!("seed {seed}, N={}", n.get()),
    ))
}

/// End-to-end model residuals: stationarity on the symmetric manifold and
/// in the full coordinate space, representative-tuple consistency, and —
/// for the interacting built-in — the closed-form frequency pattern.
fn model_check(config: &RunConfig, n: ParticleCount) -> CheckOutcome {
    let (spec, _) = config.model.load(config.lambda)?;
    let system = build_system(&spec, n)?;
    let sol = snbody_core::normal_modes(&system.taylor, n)?;
    let mut parts: Vec<(String, f64)> = Vec::new();
    if let Some(minimum) = &system.minimum {
        parts.push(("gradient".into(), minimum.gradient_norm / 1e-10));
    }
    parts.push(("first-order term".into(), system.taylor.gradient_amax / 1e-8));
    parts.push(("cross-tuple".into(), system.taylor.cross_tuple_residual / 1e-9));
    let is_builtin_interacting =
        config.model == ModelSource::Builtin("harmonic-harmonic".into());
    if is_builtin_interacting {
        let lambda = config.lambda.unwrap_or(builtin_lambda());
        let (wt, wr) = (1.0, (1.0 + n.get() as f64 * lambda).sqrt());
        let expect = [
            (Mode::ZeroPlus, 2.0 * wr),
            (Mode::ZeroMinus, 2.0 * wt),
            (Mode::OnePlus, 2.0 * wr),
            (Mode::OneMinus, wt + wr),
            (Mode::Two, 2.0 * wr),
        ];
        let worst = expect
            .iter()
            .map(|(m, w)| (sol.omega_of(*m) - w).abs())
            .fold(0.0f64, f64::max);
        parts.push(("frequency pattern".into(), worst / 1e-7));
    }
    let residual = parts.iter().map(|(_, v)| *v).fold(0.0f64, f64::max);
    let detail = parts
        .iter()
        .map(|(name, v)| format!("{name} {v:.2e}"))
        .collect::<Vec<_>>()
        .join(", ");
    Ok((
        residual,
        1.0,
        format!("scaled by per-part bounds: {detail}; N={}", n.get()),
    ))
}

/// The default pair coupling of the harmonic-harmonic built-in, read off
/// the built-in itself so the check cannot drift from it.
fn builtin_lambda() -> f64 {
    match ModelSpec::builtin("harmonic-harmonic") {
        Some(ModelSpec::Potential(m)) => match m.int {
            snbody_core::Interaction::Harmonic { lambda } => lambda,
            _ => 0.0,
        },
        _ => 0.0,
    }
}

/// Two full pipeline runs must render byte-identical archives.
fn determinism(config: &RunConfig) -> CheckOutcome {
    let first = run_pipeline(config)?.render()?;
    let second = run_pipeline(config)?.render()?;
    let differing: Vec<&str> = first
        .iter()
        .filter(|(name, contents)| second.get(*name) != Some(contents))
        .map(|(name, _)| *name)
        .collect();
    let detail = if differing.is_empty() {
        format!("byte-identical ({} files)", first.len())
    } else {
        format!("differs: {}", differing.join(", "))
    };
    Ok((differing.len() as f64, 0.0, detail))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_config(n: u32) -> RunConfig {
        RunConfig::new(n, ModelSource::Builtin("harmonic-harmonic".into()))
    }

    #[test]
    fn fast_structural_checks_pass_at_small_n() {
        let mut config = base_config(6);
        config.checks = vec![
            CheckKind::Catalog,
            CheckKind::WOrthogonality,
            CheckKind::CgInvariance,
            CheckKind::Reconstruction,
        ];
        let report = run_checks(&config);
        assert!(report.all_passed(), "{report}");
        assert_eq!(report.lines.len(), 4);
    }

    #[test]
    fn tolerance_override_can_force_failure() {
        let mut config = base_config(6);
        config.checks = vec![CheckKind::WOrthogonality];
        config.tolerance = Some(1e-30);
        let report = run_checks(&config);
        assert!(!report.all_passed());
        assert_eq!(report.lines[0].bound, 1e-30);
    }

    #[test]
    fn check_errors_become_failed_lines() {
        let mut config = base_config(3);
        config.checks = vec![CheckKind::CgInvariance];
        let report = run_checks(&config);
        assert!(!report.all_passed());
        assert!(report.lines[0].residual.is_nan());
        assert!(report.lines[0].detail.contains("requires N >= 4"));
    }

    #[test]
    fn model_and_determinism_checks_pass_for_the_builtin() {
        let mut config = base_config(5);
        config.checks = vec![CheckKind::Model, CheckKind::Determinism];
        let report = run_checks(&config);
        assert!(report.all_passed(), "{report}");
    }
}
