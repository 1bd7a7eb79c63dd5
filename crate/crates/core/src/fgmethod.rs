//! Normal-mode solution of the quadratic sector.
//!
//! The second-derivative (force) and inverse-mass (kinetic) matrices of the
//! leading Hamiltonian are invariant two-index tensors, so each is a short
//! combination of the seven two-index binary invariants. Reducing their
//! product with the beta coefficients collapses the P x P eigenproblem to a
//! 2 x 2 problem per sector (radial and angular species mixing) for the
//! symmetric and standard sectors, and a scalar for the two-row sector:
//! five distinct frequencies however large N grows.
//!
//! Conventions: the product matrix eigenproblem is FG V^T = V^T lambda with
//! V G V^T = 1; rows of the per-sector mixing matrix C are normal-mode
//! coefficient vectors, so q_mode = sum_species C[mode, species] S_species
//! and C sigma^G C^T = 1 automatically. Within a sector the larger root is
//! labeled "+".

use crate::binary_transform::{analytic_beta, BetaKey};
use crate::coordinates::{InternalIndex, ParticleCount};
use crate::error::{Error, Result};
use crate::graphs::{BinaryInvariant, Block, GraphId};
use crate::symmetry::Irrep;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

/// One of the five distinct normal modes.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
pub enum Mode {
    ZeroPlus,
    ZeroMinus,
    OnePlus,
    OneMinus,
    Two,
}

impl Mode {
    pub const ALL: [Mode; 5] = [
        Mode::ZeroPlus,
        Mode::ZeroMinus,
        Mode::OnePlus,
        Mode::OneMinus,
        Mode::Two,
    ];

    pub fn irrep(self) -> Irrep {
        match self {
            Mode::ZeroPlus | Mode::ZeroMinus => Irrep::Zero,
            Mode::OnePlus | Mode::OneMinus => Irrep::One,
            Mode::Two => Irrep::Two,
        }
    }

    /// Number of degenerate copies of the mode.
    pub fn dim(self, n: ParticleCount) -> usize {
        self.irrep().dim(n)
    }

    /// Row of the mode inside its sector's mixing matrix.
    pub fn sector_row(self) -> usize {
        match self {
            Mode::ZeroPlus | Mode::OnePlus | Mode::Two => 0,
            Mode::ZeroMinus | Mode::OneMinus => 1,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Mode::ZeroPlus => "0+",
            Mode::ZeroMinus => "0-",
            Mode::OnePlus => "1+",
            Mode::OneMinus => "1-",
            Mode::Two => "2",
        }
    }

    pub fn parse(s: &str) -> Result<Mode> {
        Mode::ALL
            .into_iter()
            .find(|m| m.label() == s)
            .ok_or_else(|| Error::InputError(format!("unknown mode label {s:?}")))
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Coefficients of an invariant (generally non-symmetric) matrix such as
/// the force-times-kinetic product, in the two-index graph basis. Blocks:
/// `rr` over radial pairs (equal, distinct), `rg`/`gr` over the mixed
/// blocks (incident, disjoint), `gg` over angular pairs (equal, sharing,
/// disjoint).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FgCoefficients {
    pub rr: [f64; 2],
    pub rg: [f64; 2],
    pub gr: [f64; 2],
    pub gg: [f64; 3],
}

/// Coefficients of an invariant symmetric quadratic form (kinetic matrix):
/// the mixed block appears once, transposed into both off-diagonal
/// positions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GCoefficients {
    pub rr: [f64; 2],
    pub gr: [f64; 2],
    pub gg: [f64; 3],
}

impl GCoefficients {
    pub fn as_product(&self) -> FgCoefficients {
        FgCoefficients { rr: self.rr, rg: self.gr, gr: self.gr, gg: self.gg }
    }
}

impl FgCoefficients {
    /// Reinterprets as a symmetric form; errors if the mixed blocks do not
    /// agree.
    pub fn as_symmetric(&self) -> Result<GCoefficients> {
        let scale = self
            .rr
            .iter()
            .chain(&self.rg)
            .chain(&self.gr)
            .chain(&self.gg)
            .fold(1.0f64, |m, v| m.max(v.abs()));
        for k in 0..2 {
            if (self.rg[k] - self.gr[k]).abs() > 1e-9 * scale {
                return Err(Error::InputError(format!(
                    "mixed-block coefficients differ: rg[{k}] = {} vs gr[{k}] = {}",
                    self.rg[k], self.gr[k]
                )));
            }
        }
        Ok(GCoefficients { rr: self.rr, gr: self.gr, gg: self.gg })
    }
}

/// Sector reduction of an invariant matrix: a small matrix over the
/// species carrying the sector (radial then angular rows/columns for the
/// symmetric and standard sectors, angular alone for the two-row sector).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SigmaBlock {
    pub alpha: Irrep,
    pub mat: DMatrix<f64>,
}

fn beta2(block: Block, class: u8, alpha: Irrep, n: ParticleCount) -> f64 {
    let id = GraphId::new(block, class);
    analytic_beta(id, BetaKey::Rank2([alpha, alpha]), n)
        .expect("two-index key shapes are valid")
        .expect("cell exists for the sectors requested")
}

/// Reduces invariant-matrix coefficients to one small matrix per sector.
pub fn reduce_sigma(c: &FgCoefficients, n: ParticleCount) -> Result<Vec<SigmaBlock>> {
    if n.get() < 4 {
        return Err(Error::TwoSectorUnavailable(n.get()));
    }
    let mut out = Vec::with_capacity(3);
    for alpha in [Irrep::Zero, Irrep::One] {
        let b_rr: Vec<f64> = (0u8..2).map(|k| beta2(Block::Rr, k, alpha, n)).collect();
        let b_gr: Vec<f64> = (0u8..2).map(|k| beta2(Block::GammaR, k, alpha, n)).collect();
        let b_gg: Vec<f64> = (0u8..3).map(|k| beta2(Block::GammaGamma, k, alpha, n)).collect();
        let mut mat = DMatrix::zeros(2, 2);
        mat[(0, 0)] = c.rr[0] * b_rr[0] + c.rr[1] * b_rr[1];
        mat[(0, 1)] = c.rg[0] * b_gr[0] + c.rg[1] * b_gr[1];
        mat[(1, 0)] = c.gr[0] * b_gr[0] + c.gr[1] * b_gr[1];
        mat[(1, 1)] = c.gg[0] * b_gg[0] + c.gg[1] * b_gg[1] + c.gg[2] * b_gg[2];
        out.push(SigmaBlock { alpha, mat });
    }
    let b_gg: Vec<f64> = (0u8..3)
        .map(|k| beta2(Block::GammaGamma, k, Irrep::Two, n))
        .collect();
    let mut mat = DMatrix::zeros(1, 1);
    mat[(0, 0)] = c.gg[0] * b_gg[0] + c.gg[1] * b_gg[1] + c.gg[2] * b_gg[2];
    out.push(SigmaBlock { alpha: Irrep::Two, mat });
    Ok(out)
}

/// Dense assembly of an invariant matrix from its graph coefficients, in
/// the flat internal-coordinate layout (radii first, then pairs).
pub fn assemble_full(c: &FgCoefficients, n: ParticleCount) -> DMatrix<f64> {
    let p = n.num_coords();
    let mut m = DMatrix::zeros(p, p);
    let fl = |idx: InternalIndex| idx.flat_index(n).unwrap();
    for (class, weight) in c.rr.iter().enumerate() {
        let inv = BinaryInvariant::new(GraphId::new(Block::Rr, class as u8), n);
        for t in inv.members() {
            m[(fl(t[0]), fl(t[1]))] += weight;
        }
    }
    for (class, weight) in c.gr.iter().enumerate() {
        let inv = BinaryInvariant::new(GraphId::new(Block::GammaR, class as u8), n);
        for t in inv.members() {
            m[(fl(t[0]), fl(t[1]))] += weight;
        }
    }
    for (class, weight) in c.rg.iter().enumerate() {
        let inv = BinaryInvariant::new(GraphId::new(Block::GammaR, class as u8), n);
        for t in inv.members() {
            m[(fl(t[1]), fl(t[0]))] += weight;
        }
    }
    for (class, weight) in c.gg.iter().enumerate() {
        let inv = BinaryInvariant::new(GraphId::new(Block::GammaGamma, class as u8), n);
        for t in inv.members() {
            m[(fl(t[0]), fl(t[1]))] += weight;
        }
    }
    m
}

/// Reads the nine graph coefficients back off a dense invariant matrix
/// using representative entries, and checks on a second representative of
/// each class that the matrix really is invariant-shaped.
pub fn coefficients_from_dense(m: &DMatrix<f64>, n: ParticleCount) -> Result<FgCoefficients> {
    if n.get() < 4 {
        return Err(Error::TwoSectorUnavailable(n.get()));
    }
    let fl = |idx: InternalIndex| idx.flat_index(n).unwrap();
    let r = |i: u32| fl(InternalIndex::radial(i));
    let g = |i: u32, j: u32| fl(InternalIndex::pair(i, j));
    let picks: [((usize, usize), (usize, usize)); 9] = [
        ((r(1), r(1)), (r(2), r(2))),
        ((r(1), r(2)), (r(3), r(1))),
        ((r(1), g(1, 2)), (r(2), g(2, 3))),
        ((r(1), g(2, 3)), (r(4), g(1, 2))),
        ((g(1, 2), r(1)), (g(2, 3), r(2))),
        ((g(2, 3), r(1)), (g(1, 2), r(4))),
        ((g(1, 2), g(1, 2)), (g(1, 3), g(1, 3))),
        ((g(1, 2), g(1, 3)), (g(1, 2), g(2, 3))),
        ((g(1, 2), g(3, 4)), (g(3, 4), g(1, 2))),
    ];
    let scale = m.amax().max(1.0);
    let mut vals = [0.0; 9];
    for (k, (p1, p2)) in picks.iter().enumerate() {
        let (v1, v2) = (m[*p1], m[*p2]);
        if (v1 - v2).abs() > 1e-9 * scale {
            return Err(Error::InputError(format!(
                "matrix is not constant on graph classes: entries {v1} and {v2} in class {k}"
            )));
        }
        vals[k] = v1;
    }
    Ok(FgCoefficients {
        rr: [vals[0], vals[1]],
        rg: [vals[2], vals[3]],
        gr: [vals[4], vals[5]],
        gg: [vals[6], vals[7], vals[8]],
    })
}

/// Graph coefficients of the matrix product `left * right`. Invariant
/// matrices are closed under multiplication, so the product is again
/// described by nine numbers; they are read back off the dense product.
pub fn product_coefficients(
    left: &FgCoefficients,
    right: &FgCoefficients,
    n: ParticleCount,
) -> Result<FgCoefficients> {
    let m = assemble_full(left, n) * assemble_full(right, n);
    coefficients_from_dense(&m, n)
}

/// Frequencies, mixing matrices and bookkeeping of the five-mode solution.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NormalModeSolution {
    pub n: ParticleCount,
    pub lambda: BTreeMap<Mode, f64>,
    pub omega: BTreeMap<Mode, f64>,
    /// Per sector: rows are modes (larger root first), columns species.
    pub cmix: BTreeMap<Irrep, DMatrix<f64>>,
    pub cmix_inv: BTreeMap<Irrep, DMatrix<f64>>,
    /// Sectors whose two roots coincide within tolerance.
    pub degenerate_sectors: Vec<Irrep>,
}

impl NormalModeSolution {
    pub fn omega_of(&self, mode: Mode) -> f64 {
        self.omega[&mode]
    }

    /// Degeneracy-weighted half sum of frequencies plus the offset term.
    pub fn ground_state_energy(&self, offset: f64) -> f64 {
        Mode::ALL
            .iter()
            .map(|m| 0.5 * m.dim(self.n) as f64 * self.omega[m])
            .sum::<f64>()
            + offset
    }
}

/// Solves the sector-reduced eigenproblem given the product-matrix
/// coefficients and the kinetic coefficients.
pub fn solve_sectors(
    fg: &FgCoefficients,
    g: &GCoefficients,
    n: ParticleCount,
) -> Result<NormalModeSolution> {
    let sigma_fg = reduce_sigma(fg, n)?;
    let sigma_g = reduce_sigma(&g.as_product(), n)?;
    let mut lambda = BTreeMap::new();
    let mut cmix = BTreeMap::new();
    let mut cmix_inv = BTreeMap::new();
    let mut degenerate = Vec::new();

    for (s_fg, s_g) in sigma_fg.iter().zip(&sigma_g) {
        let alpha = s_fg.alpha;
        let sg = &s_g.mat;
        let chol = nalgebra::Cholesky::new(sg.clone()).ok_or_else(|| {
            Error::NotPositiveDefinite {
                what: format!("kinetic reduction in sector {alpha}"),
            }
        })?;
        // sigma_F
        let sf = {
            let inv = chol.inverse();
            let cand = &s_fg.mat * inv;
            let residual = (&cand - cand.transpose()).amax() / cand.amax().max(1.0);
            if residual > 1e-8 {
                return Err(Error::IncompatibleSectorInput {
                    sector: alpha.to_string(),
                    residual,
                });
            }
            (&cand + cand.transpose()) * 0.5
        };
        let l = chol.l();
        let a = l.transpose() * &sf * &l;
        let eig = nalgebra::SymmetricEigen::new(a);
        // Order the roots descending, then map to modes.
        let dim = sg.nrows();
        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by(|&i, &j| {
            eig.eigenvalues[j]
                .partial_cmp(&eig.eigenvalues[i])
                .unwrap()
        });
        let mut c = DMatrix::zeros(dim, dim);
        for (row, &k) in order.iter().enumerate() {
            let lam = eig.eigenvalues[k];
            let mode = mode_for(alpha, row);
            if lam <= 0.0 {
                return Err(Error::UnstableConfiguration {
                    sector: mode.label().to_string(),
                    lambda: lam,
                });
            }
            lambda.insert(mode, lam);
            // Back-transform the eigenvector: solve L^T c = w.
            let w = eig.eigenvectors.column(k).into_owned();
            let cvec = l
                .transpose()
                .solve_upper_triangular(&w)
                .expect("cholesky factor is invertible");
            c.row_mut(row).copy_from(&cvec.transpose());
        }
        if dim == 2 {
            let (lp, lm) = (
                lambda[&mode_for(alpha, 0)],
                lambda[&mode_for(alpha, 1)],
            );
            if (lp - lm).abs() <= 1e-9 * lp.abs().max(lm.abs()).max(1.0) {
                degenerate.push(alpha);
            }
        }
        // C sigma_G C^T = 1, so the inverse is sigma_G C^T.
        let cinv = sg * c.transpose();
        cmix.insert(alpha, c);
        cmix_inv.insert(alpha, cinv);
    }

    let omega = lambda
        .iter()
        .map(|(m, l)| (*m, l.sqrt()))
        .collect();
    Ok(NormalModeSolution {
        n,
        lambda,
        omega,
        cmix,
        cmix_inv,
        degenerate_sectors: degenerate,
    })
}

fn mode_for(alpha: Irrep, row: usize) -> Mode {
    match (alpha, row) {
        (Irrep::Zero, 0) => Mode::ZeroPlus,
        (Irrep::Zero, 1) => Mode::ZeroMinus,
        (Irrep::One, 0) => Mode::OnePlus,
        (Irrep::One, 1) => Mode::OneMinus,
        (Irrep::Two, 0) => Mode::Two,
        _ => unreachable!("sector rows are 0 or 1"),
    }
}

/// Expected multiset of eigenvalues of the dense product matrix: each mode
/// frequency squared with its degeneracy.
pub fn expected_spectrum(solution: &NormalModeSolution) -> Vec<f64> {
    let mut out = Vec::new();
    for mode in Mode::ALL {
        let lam = solution.lambda[&mode];
        out.extend(std::iter::repeat_n(lam, mode.dim(solution.n)));
    }
    out.sort_by(|a, b| a.partial_cmp(b).unwrap());
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coordinates::pair_indices;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pc(n: u32) -> ParticleCount {
        ParticleCount::new(n).unwrap()
    }

    #[test]
    fn single_distinct_radial_coefficient_reduces_simply() {
        // With only the distinct-radial-pair coefficient set, the symmetric
        // sector picks up (N-1) of it and the standard sector -1 of it.
        let n = pc(7);
        let c = FgCoefficients {
            rr: [0.0, 2.5],
            rg: [0.0; 2],
            gr: [0.0; 2],
            gg: [0.0; 3],
        };
        let sigma = reduce_sigma(&c, n).unwrap();
        assert_abs_diff_eq!(sigma[0].mat[(0, 0)], 2.5 * 6.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sigma[1].mat[(0, 0)], -2.5, epsilon = 1e-12);
        assert_eq!(sigma[2].mat[(0, 0)], 0.0);
    }

    #[test]
    fn reduction_matches_dense_transform() {
        let n = pc(6);
        let w = crate::symmetry::build_W(n);
        let full = w.assemble_full();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut r = || rng.gen_range(-1.0..1.0);
        let c = FgCoefficients {
            rr: [r(), r()],
            rg: [r(), r()],
            gr: [r(), r()],
            gg: [r(), r(), r()],
        };
        let dense = assemble_full(&c, n);
        let transformed = &full * &dense * full.transpose();
        let sigma = reduce_sigma(&c, n).unwrap();
        // The transformed matrix is block diagonal; each sector block is
        // the Kronecker product of the small sigma with the identity.
        use crate::symmetry::{CoordKind, SectorLabel};
        let offsets: BTreeMap<(Irrep, CoordKind), usize> = SectorLabel::ALL
            .iter()
            .map(|s| ((s.irrep, s.kind), w.sector_offset(*s)))
            .collect();
        let species = |alpha: Irrep| match alpha {
            Irrep::Two => vec![CoordKind::Angular],
            _ => vec![CoordKind::Radial, CoordKind::Angular],
        };
        for block in &sigma {
            let d = block.alpha.dim(n);
            let sp = species(block.alpha);
            for (bi, ki) in sp.iter().enumerate() {
                for (bj, kj) in sp.iter().enumerate() {
                    let (oi, oj) = (offsets[&(block.alpha, *ki)], offsets[&(block.alpha, *kj)]);
                    for t in 0..d {
                        for u in 0..d {
                            let expect = if t == u { block.mat[(bi, bj)] } else { 0.0 };
                            assert_abs_diff_eq!(
                                transformed[(oi + t, oj + u)],
                                expect,
                                epsilon = 1e-9
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn random_product_matches_dense_spectrum() {
        for (seed, nn) in [(1u64, 4u32), (2, 6), (3, 9)] {
            let n = pc(nn);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (f, g) = random_forms(&mut rng, n);
            let dense_f = assemble_full(&f.as_product(), n);
            let dense_g = assemble_full(&g.as_product(), n);
            let product = &dense_f * &dense_g;
            let fg = coefficients_from_dense(&product, n).unwrap();
            // Assembling the extracted coefficients reproduces the product.
            let back = assemble_full(&fg, n);
            assert!((&back - &product).amax() < 1e-9);

            let solution = solve_sectors(&fg, &g, n).unwrap();
            // Dense oracle: eigenvalues of L^T F L where G = L L^T.
            let chol = nalgebra::Cholesky::new(dense_g.clone()).unwrap();
            let a = chol.l().transpose() * &dense_f * chol.l();
            let mut dense_eigs = nalgebra::SymmetricEigen::new(a)
                .eigenvalues
                .iter()
                .copied()
                .collect::<Vec<_>>();
            dense_eigs.sort_by(|x, y| x.partial_cmp(y).unwrap());
            let expected = expected_spectrum(&solution);
            assert_eq!(dense_eigs.len(), expected.len());
            for (a, b) in dense_eigs.iter().zip(&expected) {
                assert!(
                    (a - b).abs() < 1e-8 * b.abs().max(1.0),
                    "N={nn}: dense {a} vs reduced {b}"
                );
            }
            // Mixing rows really normalize the kinetic form.
            for (alpha, c) in &solution.cmix {
                let sg = reduce_sigma(&g.as_product(), n)
                    .unwrap()
                    .into_iter()
                    .find(|s| s.alpha == *alpha)
                    .unwrap();
                let gram = c * &sg.mat * c.transpose();
                let eye = DMatrix::identity(gram.nrows(), gram.ncols());
                assert!((gram - eye).amax() < 1e-9);
                let prod = c * &solution.cmix_inv[alpha];
                let eye = DMatrix::identity(prod.nrows(), prod.ncols());
                assert!((prod - eye).amax() < 1e-9);
            }
        }
    }

    /// Random positive-definite invariant forms, built as B^T B plus a
    /// multiple of the identity so every sector reduction stays positive
    /// at any N.
    fn random_forms(rng: &mut ChaCha8Rng, n: ParticleCount) -> (GCoefficients, GCoefficients) {
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
                + DMatrix::identity(n.num_coords(), n.num_coords()) * diag;
            coefficients_from_dense(&dense, n)
                .unwrap()
                .as_symmetric()
                .unwrap()
        };
        let f = draw(0.5);
        let g = draw(1.0);
        (f, g)
    }

    #[test]
    fn sector_reduction_carries_products_to_products() {
        let n = pc(7);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (f, g) = random_forms(&mut rng, n);
        let prod = product_coefficients(&f.as_product(), &g.as_product(), n).unwrap();
        let sp = reduce_sigma(&prod, n).unwrap();
        let sf = reduce_sigma(&f.as_product(), n).unwrap();
        let sg = reduce_sigma(&g.as_product(), n).unwrap();
        for ((p, a), b) in sp.iter().zip(&sf).zip(&sg) {
            assert_eq!(p.alpha, a.alpha);
            assert!((&p.mat - &a.mat * &b.mat).amax() < 1e-9);
        }
    }

    #[test]
    fn unstable_and_degenerate_cases_are_reported() {
        let n = pc(5);
        // Pure identity kinetic form; force with a negative radial block.
        let g = GCoefficients { rr: [1.0, 0.0], gr: [0.0; 2], gg: [1.0, 0.0, 0.0] };
        let f_bad = FgCoefficients {
            rr: [-1.0, 0.0],
            rg: [0.0; 2],
            gr: [0.0; 2],
            gg: [1.0, 0.0, 0.0],
        };
        match solve_sectors(&f_bad, &g, n) {
            Err(Error::UnstableConfiguration { lambda, .. }) => assert!(lambda < 0.0),
            other => panic!("expected instability, got {other:?}"),
        }
        // Identical force and kinetic blocks make both roots one.
        let f_deg = FgCoefficients {
            rr: [1.0, 0.0],
            rg: [0.0; 2],
            gr: [0.0; 2],
            gg: [1.0, 0.0, 0.0],
        };
        let sol = solve_sectors(&f_deg, &g, n).unwrap();
        assert_eq!(sol.degenerate_sectors, vec![Irrep::Zero, Irrep::One]);
        for m in Mode::ALL {
            assert_abs_diff_eq!(sol.omega_of(m), 1.0, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(
            sol.ground_state_energy(0.25),
            0.5 * n.num_coords() as f64 + 0.25,
            epsilon = 1e-12
        );
        // A non-symmetric product over a symmetric kinetic form is
        // rejected.
        let f_skew = FgCoefficients {
            rr: [1.0, 0.0],
            rg: [0.6, 0.0],
            gr: [-0.6, 0.0],
            gg: [1.0, 0.0, 0.0],
        };
        match solve_sectors(&f_skew, &g, n) {
            Err(Error::IncompatibleSectorInput { .. }) => {}
            other => panic!("expected incompatibility, got {other:?}"),
        }
    }

    #[test]
    fn pair_layout_helper_consistency() {
        // The representative picks in coefficient extraction assume the
        // flat layout; make sure a pair index round-trips there.
        let n = pc(6);
        let all: Vec<InternalIndex> = pair_indices(n).collect();
        assert_eq!(all[0], InternalIndex::pair(1, 2));
        assert_eq!(all[0].flat_index(n).unwrap(), 6);
    }
}
