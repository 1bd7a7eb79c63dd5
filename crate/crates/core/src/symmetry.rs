//! Symmetry-coordinate transformation: orthonormal row blocks carrying the
//! three irreducible contents of the internal-coordinate representation.
//!
//! The radial block of the coordinate vector carries the scalar irrep once
//! and the standard (N-1)-dimensional irrep once; the pair block carries the
//! scalar and standard irreps once each plus the N(N-3)/2-dimensional
//! two-row irrep once. The five row blocks below give orthonormal bases of
//! those carrier spaces in closed form; stacking them in the order
//! [scalar-radial; scalar-pair; standard-radial; standard-pair; two-row]
//! yields an orthogonal P x P matrix.

use crate::coordinates::{pair_indices, InternalIndex, ParticleCount, Permutation};
use crate::error::{Error, Result};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::fmt;

/// Irreducible representation label.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
pub enum Irrep {
    /// Scalar (fully symmetric), dimension 1.
    Zero,
    /// Standard, dimension N-1.
    One,
    /// Two-row, dimension N(N-3)/2; carried by pair coordinates only.
    Two,
}

impl Irrep {
    pub const ALL: [Irrep; 3] = [Irrep::Zero, Irrep::One, Irrep::Two];

    pub fn dim(self, n: ParticleCount) -> usize {
        match self {
            Irrep::Zero => 1,
            Irrep::One => n.n() - 1,
            Irrep::Two => n.n() * (n.n() - 3) / 2,
        }
    }

    pub fn digit(self) -> char {
        match self {
            Irrep::Zero => '0',
            Irrep::One => '1',
            Irrep::Two => '2',
        }
    }

    pub fn from_digit(c: char) -> Result<Irrep> {
        match c {
            '0' => Ok(Irrep::Zero),
            '1' => Ok(Irrep::One),
            '2' => Ok(Irrep::Two),
            _ => Err(Error::InputError(format!("unknown irrep digit {c:?}"))),
        }
    }
}

impl fmt::Display for Irrep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.digit())
    }
}

/// Which species of internal coordinate a row block acts on.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
pub enum CoordKind {
    Radial,
    Angular,
}

impl CoordKind {
    pub fn dim(self, n: ParticleCount) -> usize {
        match self {
            CoordKind::Radial => n.n(),
            CoordKind::Angular => n.num_pairs(),
        }
    }

    pub fn letter(self) -> char {
        match self {
            CoordKind::Radial => 'r',
            CoordKind::Angular => 'g',
        }
    }
}

/// One row block of the transformation: an irrep carried by one coordinate
/// species. The two-row irrep exists only in the angular species.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
pub struct SectorLabel {
    pub irrep: Irrep,
    pub kind: CoordKind,
}

impl SectorLabel {
    pub fn new(irrep: Irrep, kind: CoordKind) -> Result<Self> {
        if irrep == Irrep::Two && kind == CoordKind::Radial {
            return Err(Error::InputError(
                "two-row irrep is not carried by radial coordinates".into(),
            ));
        }
        Ok(SectorLabel { irrep, kind })
    }

    /// All five row blocks in stacking order.
    pub const ALL: [SectorLabel; 5] = [
        SectorLabel { irrep: Irrep::Zero, kind: CoordKind::Radial },
        SectorLabel { irrep: Irrep::Zero, kind: CoordKind::Angular },
        SectorLabel { irrep: Irrep::One, kind: CoordKind::Radial },
        SectorLabel { irrep: Irrep::One, kind: CoordKind::Angular },
        SectorLabel { irrep: Irrep::Two, kind: CoordKind::Angular },
    ];

    pub fn rows(self, n: ParticleCount) -> usize {
        self.irrep.dim(n)
    }

    pub fn cols(self, n: ParticleCount) -> usize {
        self.kind.dim(n)
    }
}

impl fmt::Display for SectorLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.irrep.digit(), self.kind.letter())
    }
}

/// Step function: 1 for arguments >= 1, else 0.
pub fn theta(n: i64) -> f64 {
    if n >= 1 {
        1.0
    } else {
        0.0
    }
}

/// Row labels (i, j) of the two-row block, 1 <= i <= j-2, 4 <= j <= N, in
/// stacking order (j ascending, then i). The same list indexes the two-row
/// irrep space everywhere in this crate.
pub fn two_sector_rows(n: ParticleCount) -> Vec<(u32, u32)> {
    let mut rows = Vec::with_capacity(Irrep::Two.dim(n));
    for j in 4..=n.get() {
        for i in 1..=j - 2 {
            rows.push((i, j));
        }
    }
    rows
}

/// The five orthonormal row blocks of the symmetry-coordinate transform.
#[derive(Clone, Debug)]
pub struct WMatrix {
    n: ParticleCount,
    scalar_radial: DMatrix<f64>,
    scalar_angular: DMatrix<f64>,
    standard_radial: DMatrix<f64>,
    standard_angular: DMatrix<f64>,
    two_angular: DMatrix<f64>,
}

/// Builds the five row blocks for N particles.
#[allow(non_snake_case)]
pub fn build_W(n: ParticleCount) -> WMatrix {
    let nn = n.n();
    let m = n.num_pairs();
    let nf = nn as f64;

    let scalar_radial = DMatrix::from_element(1, nn, 1.0 / nf.sqrt());
    let scalar_angular = DMatrix::from_element(1, m, (2.0 / (nf * (nf - 1.0))).sqrt());

    // Standard irrep over radii: row i supported on the first i+1 radii.
    let std_r = |i: i64, k: i64| -> f64 {
        (theta(i - k + 1) - i as f64 * if k == i + 1 { 1.0 } else { 0.0 })
            / ((i as f64) * (i as f64 + 1.0)).sqrt()
    };
    let standard_radial =
        DMatrix::from_fn(nn - 1, nn, |i0, k0| std_r(i0 as i64 + 1, k0 as i64 + 1));

    let pair_cols: Vec<(u32, u32)> = pair_indices(n)
        .map(|idx| match idx {
            InternalIndex::Pair(k, l) => (k, l),
            InternalIndex::Radial(_) => unreachable!("pair_indices yields pairs"),
        })
        .collect();

    let standard_angular = DMatrix::from_fn(nn - 1, m, |i0, col| {
        let (k, l) = pair_cols[col];
        (std_r(i0 as i64 + 1, k as i64) + std_r(i0 as i64 + 1, l as i64)) / (nf - 2.0).sqrt()
    });

    let rows2 = two_sector_rows(n);
    let two_angular = DMatrix::from_fn(rows2.len(), m, |row, col| {
        let (i, j) = rows2[row];
        let (m1, n1) = pair_cols[col];
        let (i, j) = (i as i64, j as i64);
        let (mm, nn1) = (m1 as i64, n1 as i64);
        let a = |x: i64| theta(i - x + 1) - i as f64 * if x == i + 1 { 1.0 } else { 0.0 };
        let b = |x: i64| theta(j - x) - (j - 3) as f64 * if x == j { 1.0 } else { 0.0 };
        let norm = ((i * (i + 1) * (j - 3) * (j - 2)) as f64).sqrt();
        (a(mm) * b(nn1) + a(nn1) * b(mm)) / norm
    });

    WMatrix {
        n,
        scalar_radial,
        scalar_angular,
        standard_radial,
        standard_angular,
        two_angular,
    }
}

impl WMatrix {
    pub fn n(&self) -> ParticleCount {
        self.n
    }

    pub fn block(&self, sector: SectorLabel) -> &DMatrix<f64> {
        match (sector.irrep, sector.kind) {
            (Irrep::Zero, CoordKind::Radial) => &self.scalar_radial,
            (Irrep::Zero, CoordKind::Angular) => &self.scalar_angular,
            (Irrep::One, CoordKind::Radial) => &self.standard_radial,
            (Irrep::One, CoordKind::Angular) => &self.standard_angular,
            (Irrep::Two, CoordKind::Angular) => &self.two_angular,
            (Irrep::Two, CoordKind::Radial) => {
                panic!("two-row irrep is not carried by radial coordinates")
            }
        }
    }

    /// Offset of each row block in the stacked symmetry-coordinate vector.
    pub fn sector_offset(&self, sector: SectorLabel) -> usize {
        let mut offset = 0;
        for s in SectorLabel::ALL {
            if s == sector {
                return offset;
            }
            offset += s.rows(self.n);
        }
        unreachable!("SectorLabel::ALL is exhaustive")
    }

    /// Full P x P orthogonal matrix: the five row blocks stacked, with
    /// radial-species blocks over the first N columns and angular-species
    /// blocks over the remaining M.
    pub fn assemble_full(&self) -> DMatrix<f64> {
        let p = self.n.num_coords();
        let nn = self.n.n();
        let mut w = DMatrix::zeros(p, p);
        for sector in SectorLabel::ALL {
            let block = self.block(sector);
            let row0 = self.sector_offset(sector);
            let col0 = match sector.kind {
                CoordKind::Radial => 0,
                CoordKind::Angular => nn,
            };
            w.view_mut((row0, col0), (block.nrows(), block.ncols()))
                .copy_from(block);
        }
        w
    }
}

/// Representation matrix of a particle relabeling on one irrep space,
/// obtained by conjugating the coordinate permutation action with the
/// corresponding row block: scalar and standard irreps from the radial
/// species, the two-row irrep from the angular species.
///
/// The rows of each block span an invariant subspace, so the result is
/// orthogonal and composes as a homomorphism; the angular-species copies of
/// the scalar and standard irreps induce the identical matrices.
pub fn induced_rep(w: &WMatrix, irrep: Irrep, p: &Permutation) -> DMatrix<f64> {
    let n = w.n();
    let sector = match irrep {
        Irrep::Zero => SectorLabel { irrep, kind: CoordKind::Radial },
        Irrep::One => SectorLabel { irrep, kind: CoordKind::Radial },
        Irrep::Two => SectorLabel { irrep, kind: CoordKind::Angular },
    };
    let block = w.block(sector);
    let action = species_permutation(n, sector.kind, p);
    block * action * block.transpose()
}

/// Permutation matrix of the relabeling restricted to one coordinate
/// species.
pub fn species_permutation(n: ParticleCount, kind: CoordKind, p: &Permutation) -> DMatrix<f64> {
    match kind {
        CoordKind::Radial => {
            let nn = n.n();
            let mut t = DMatrix::zeros(nn, nn);
            for i in 1..=n.get() {
                t[((p.apply(i) - 1) as usize, (i - 1) as usize)] = 1.0;
            }
            t
        }
        CoordKind::Angular => {
            let m = n.num_pairs();
            let mut t = DMatrix::zeros(m, m);
            let base = n.n();
            for idx in pair_indices(n) {
                let from = idx.flat_index(n).unwrap() - base;
                let to = p.permute_index(idx).flat_index(n).unwrap() - base;
                t[(to, from)] = 1.0;
            }
            t
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn pc(n: u32) -> ParticleCount {
        ParticleCount::new(n).unwrap()
    }

    #[test]
    fn theta_steps_at_one() {
        assert_eq!(theta(-3), 0.0);
        assert_eq!(theta(0), 0.0);
        assert_eq!(theta(1), 1.0);
        assert_eq!(theta(5), 1.0);
    }

    #[test]
    fn sector_dims_sum_to_p() {
        for n in [3u32, 4, 5, 8, 11] {
            let n = pc(n);
            let total: usize = SectorLabel::ALL.iter().map(|s| s.rows(n)).sum();
            assert_eq!(total, n.num_coords());
        }
    }

    #[test]
    fn two_sector_rows_count() {
        assert_eq!(two_sector_rows(pc(4)), vec![(1, 4), (2, 4)]);
        assert_eq!(two_sector_rows(pc(5)).len(), 5);
        assert_eq!(two_sector_rows(pc(9)).len(), 27);
    }

    #[test]
    fn standard_radial_first_row() {
        let w = build_W(pc(4));
        let b = w.block(SectorLabel::new(Irrep::One, CoordKind::Radial).unwrap());
        let s = 1.0 / 2f64.sqrt();
        assert_abs_diff_eq!(b[(0, 0)], s, epsilon = 1e-15);
        assert_abs_diff_eq!(b[(0, 1)], -s, epsilon = 1e-15);
        assert_abs_diff_eq!(b[(0, 2)], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(b[(0, 3)], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn two_row_block_at_n4() {
        let w = build_W(pc(4));
        let b = w.block(SectorLabel::new(Irrep::Two, CoordKind::Angular).unwrap());
        // Columns in pair order (12),(13),(23),(14),(24),(34).
        let expect0 = [0.0, 0.5, -0.5, -0.5, 0.5, 0.0];
        let r12 = 1.0 / 12f64.sqrt();
        let expect1 = [2.0 * r12, -r12, -r12, -r12, -r12, 2.0 * r12];
        for c in 0..6 {
            assert_abs_diff_eq!(b[(0, c)], expect0[c], epsilon = 1e-15);
            assert_abs_diff_eq!(b[(1, c)], expect1[c], epsilon = 1e-15);
        }
    }

    #[test]
    fn full_transform_is_orthogonal() {
        for n in [3u32, 4, 5, 6, 9, 12] {
            let n = pc(n);
            let w = build_W(n).assemble_full();
            let p = n.num_coords();
            let gram = &w * w.transpose();
            let eye = DMatrix::<f64>::identity(p, p);
            assert!((gram - eye).amax() < 1e-12, "N = {n}");
        }
    }

    #[test]
    fn induced_reps_are_homomorphisms() {
        let n = pc(6);
        let w = build_W(n);
        let p = Permutation::cycle(n);
        let q = Permutation::transposition(n, 2, 5);
        for irrep in Irrep::ALL {
            let rp = induced_rep(&w, irrep, &p);
            let rq = induced_rep(&w, irrep, &q);
            let rpq = induced_rep(&w, irrep, &p.compose(&q));
            assert!((&rp * &rq - rpq).amax() < 1e-12, "irrep {irrep}");
            let dim = irrep.dim(n);
            let eye = DMatrix::<f64>::identity(dim, dim);
            assert!((&rp * rp.transpose() - eye).amax() < 1e-12, "irrep {irrep}");
        }
    }

    #[test]
    fn angular_copies_induce_identical_matrices() {
        let n = pc(7);
        let w = build_W(n);
        for p in [Permutation::cycle(n), Permutation::transposition(n, 1, 4)] {
            for irrep in [Irrep::Zero, Irrep::One] {
                let from_radial = induced_rep(&w, irrep, &p);
                let kind = CoordKind::Angular;
                let block = w.block(SectorLabel { irrep, kind });
                let from_angular = block * species_permutation(n, kind, &p) * block.transpose();
                assert!((from_radial - from_angular).amax() < 1e-12, "irrep {irrep}");
            }
        }
    }

    #[test]
    fn full_transform_block_diagonalizes_permutations() {
        let n = pc(6);
        let wm = build_W(n);
        let w = wm.assemble_full();
        let p = Permutation::from_image(vec![3, 1, 2, 6, 4, 5]).unwrap();
        let t = p.permutation_matrix(n);
        let conj = &w * t * w.transpose();
        // Induced blocks on the diagonal, zeros elsewhere.
        let mut expected = DMatrix::zeros(n.num_coords(), n.num_coords());
        for sector in SectorLabel::ALL {
            let r = induced_rep(&wm, sector.irrep, &p);
            let o = wm.sector_offset(sector);
            expected
                .view_mut((o, o), (r.nrows(), r.ncols()))
                .copy_from(&r);
        }
        assert!((conj - expected).amax() < 1e-12);
    }
}
