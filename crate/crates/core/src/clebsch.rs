//! Coupling tensors joining three irrep sectors to an overall scalar.
//!
//! A coupling tensor C for the ordered key (a1, a2, a3) satisfies
//! (R_{a1} x R_{a2} x R_{a3}) C = C for every particle relabeling, with R_a
//! the induced representation of [`crate::symmetry`]. Closed forms are
//! stored for non-increasing keys; other orderings are slot permutations of
//! those. Coefficients are unnormalized: only linear independence and span
//! matter downstream, so no unitarity scaling is applied.
//!
//! The 222 key is the only one whose invariant space has dimension two, and
//! only for N >= 6; at N in {4, 5} the two closed forms coincide and a
//! single variant is exposed.
//!
//! Two independent multiplicity oracles are provided. The efficient one
//! spans the invariant space by symmetry-transformed relabeling-orbit
//! indicators and takes a rank; the direct one builds the generator
//! invariance system and measures its null space. They agree wherever the
//! direct one is tractable.

use crate::coordinates::{InternalIndex, ParticleCount, Permutation};
use crate::error::{Error, Result};
use crate::graphs::{Block, SlotKind};
use crate::symmetry::{
    build_W, induced_rep, theta, two_sector_rows, CoordKind, Irrep, SectorLabel,
};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

/// Which invariant of a multiply-degenerate key; only 222 has two.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
pub enum CouplingVariant {
    I,
    II,
}

impl fmt::Display for CouplingVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CouplingVariant::I => f.write_str("I"),
            CouplingVariant::II => f.write_str("II"),
        }
    }
}

/// Ordered irrep triple plus variant.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
pub struct CouplingKey {
    pub alphas: [Irrep; 3],
    pub variant: CouplingVariant,
}

impl CouplingKey {
    pub fn new(alphas: [Irrep; 3]) -> Self {
        CouplingKey { alphas, variant: CouplingVariant::I }
    }

    pub fn with_variant(alphas: [Irrep; 3], variant: CouplingVariant) -> Self {
        CouplingKey { alphas, variant }
    }

    /// Parses "211" or "222:II".
    pub fn parse(s: &str) -> Result<Self> {
        let (digits, variant) = match s.split_once(':') {
            Some((d, "I")) => (d, CouplingVariant::I),
            Some((d, "II")) => (d, CouplingVariant::II),
            Some((_, v)) => {
                return Err(Error::InputError(format!("unknown coupling variant {v:?}")))
            }
            None => (s, CouplingVariant::I),
        };
        let chars: Vec<char> = digits.chars().collect();
        if chars.len() != 3 {
            return Err(Error::InputError(format!(
                "coupling key needs three irrep digits, got {s:?}"
            )));
        }
        let mut alphas = [Irrep::Zero; 3];
        for (a, c) in alphas.iter_mut().zip(chars) {
            *a = Irrep::from_digit(c)?;
        }
        Ok(CouplingKey { alphas, variant })
    }

    /// True when the alpha multiset admits a scalar in the triple product.
    /// The surviving multisets are 000, 011, 022, 111, 112, 122 and 222.
    pub fn multiset_allowed(alphas: [Irrep; 3]) -> bool {
        let mut counts = [0usize; 3];
        for a in alphas {
            counts[a as usize] += 1;
        }
        let [zeros, ones, twos] = counts;
        matches!(
            (zeros, ones, twos),
            (3, 0, 0) | (1, 2, 0) | (1, 0, 2) | (0, 3, 0) | (0, 2, 1) | (0, 1, 2) | (0, 0, 3)
        )
    }

    /// Number of independent invariants for this alpha multiset at N.
    pub fn multiplicity(alphas: [Irrep; 3], n: ParticleCount) -> usize {
        if !Self::multiset_allowed(alphas) {
            return 0;
        }
        if alphas.iter().any(|a| a.dim(n) == 0) {
            return 0;
        }
        let twos = alphas.iter().filter(|a| **a == Irrep::Two).count();
        let ones = alphas.iter().filter(|a| **a == Irrep::One).count();
        // One standard slot against two two-row slots only couples from
        // N = 5 up.
        if twos == 2 && ones == 1 && n.get() < 5 {
            return 0;
        }
        if twos == 3 && n.get() >= 6 {
            2
        } else {
            1
        }
    }

    /// Checks that this key labels an invariant realized at N.
    pub fn check_realized(self, n: ParticleCount) -> Result<()> {
        if self.alphas.contains(&Irrep::Two) && n.get() < 4 {
            return Err(Error::TwoSectorUnavailable(n.get()));
        }
        let mult = Self::multiplicity(self.alphas, n);
        let index = match self.variant {
            CouplingVariant::I => 1,
            CouplingVariant::II => 2,
        };
        if index > mult {
            return Err(Error::CouplingUnavailable { key: self.to_string(), n: n.get() });
        }
        Ok(())
    }

    pub fn dims(self, n: ParticleCount) -> [usize; 3] {
        [
            self.alphas[0].dim(n),
            self.alphas[1].dim(n),
            self.alphas[2].dim(n),
        ]
    }
}

impl fmt::Display for CouplingKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for a in self.alphas {
            write!(f, "{}", a.digit())?;
        }
        if self.variant == CouplingVariant::II {
            write!(f, ":II")?;
        }
        Ok(())
    }
}

/// Sparse rank-3 tensor keyed by 0-based sector indices in lexicographic
/// order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CGTensor {
    pub dims: [usize; 3],
    entries: BTreeMap<[usize; 3], f64>,
}

impl CGTensor {
    fn new(dims: [usize; 3]) -> Self {
        CGTensor { dims, entries: BTreeMap::new() }
    }

    fn insert(&mut self, idx: [usize; 3], value: f64) {
        debug_assert!(idx.iter().zip(&self.dims).all(|(i, d)| i < d));
        if value != 0.0 {
            self.entries.insert(idx, value);
        }
    }

    pub fn entry(&self, idx: [usize; 3]) -> f64 {
        self.entries.get(&idx).copied().unwrap_or(0.0)
    }

    /// Nonzero entries in lexicographic index order.
    pub fn iter(&self) -> impl Iterator<Item = ([usize; 3], f64)> + '_ {
        self.entries.iter().map(|(k, v)| (*k, *v))
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn amax(&self) -> f64 {
        self.entries.values().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// First index (lexicographically) with |entry| above the threshold.
    pub fn first_above(&self, threshold: f64) -> Option<[usize; 3]> {
        self.entries
            .iter()
            .find(|(_, v)| v.abs() > threshold)
            .map(|(k, _)| *k)
    }

    /// Flat position of an index in row-major order.
    pub fn flat(&self, idx: [usize; 3]) -> usize {
        (idx[0] * self.dims[1] + idx[1]) * self.dims[2] + idx[2]
    }

    pub fn to_dense(&self) -> Tensor3 {
        let mut t = Tensor3::zeros(self.dims);
        for (idx, v) in self.iter() {
            *t.at_mut(idx) = v;
        }
        t
    }
}

/// Dense rank-3 scratch tensor for mode products and residual norms.
#[derive(Clone, Debug)]
pub struct Tensor3 {
    pub dims: [usize; 3],
    pub data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(dims: [usize; 3]) -> Self {
        Tensor3 { dims, data: vec![0.0; dims[0] * dims[1] * dims[2]] }
    }

    #[inline]
    pub fn at(&self, idx: [usize; 3]) -> f64 {
        self.data[(idx[0] * self.dims[1] + idx[1]) * self.dims[2] + idx[2]]
    }

    #[inline]
    pub fn at_mut(&mut self, idx: [usize; 3]) -> &mut f64 {
        &mut self.data[(idx[0] * self.dims[1] + idx[1]) * self.dims[2] + idx[2]]
    }

    /// Contracts slot `mode` with the matrix: out_{..a..} = sum_b m[a, b] t_{..b..}.
    pub fn mode_mul(&self, mode: usize, m: &DMatrix<f64>) -> Tensor3 {
        assert_eq!(m.ncols(), self.dims[mode]);
        let mut dims = self.dims;
        dims[mode] = m.nrows();
        let mut out = Tensor3::zeros(dims);
        for i0 in 0..dims[0] {
            for i1 in 0..dims[1] {
                for i2 in 0..dims[2] {
                    let mut acc = 0.0;
                    for b in 0..self.dims[mode] {
                        let mut src = [i0, i1, i2];
                        let a = src[mode];
                        src[mode] = b;
                        acc += m[(a, b)] * self.at(src);
                    }
                    *out.at_mut([i0, i1, i2]) = acc;
                }
            }
        }
        out
    }

    pub fn sub_amax(&self, other: &Tensor3) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

/// Shared building blocks for all coupling tensors at one N.
pub struct CgContext {
    n: ParticleCount,
    /// Unnormalized 111 coupling, 0-based indices.
    c111: BTreeMap<[usize; 3], f64>,
    /// Per two-row-sector-index matrix over the standard sector: the 211
    /// coupling viewed as a (N-1) x (N-1) matrix for each first index.
    m211: Vec<DMatrix<f64>>,
}

impl CgContext {
    pub fn new(n: ParticleCount) -> Self {
        let c111 = build_c111(n);
        let m211 = build_m211(n);
        CgContext { n, c111, m211 }
    }

    pub fn n(&self) -> ParticleCount {
        self.n
    }

    /// Full coupling tensor for an ordered key.
    pub fn tensor(&self, key: CouplingKey) -> Result<CGTensor> {
        key.check_realized(self.n)?;
        let (canon, perm) = canonical_order(key.alphas);
        let canon_key = CouplingKey::with_variant(canon, key.variant);
        let base = self.canonical_tensor(canon_key);
        if perm == [0, 1, 2] {
            return Ok(base);
        }
        // Slot s of the output carries canonical slot perm_inv[s].
        let mut out = CGTensor::new(key.dims(self.n));
        for (cidx, v) in base.iter() {
            let mut idx = [0usize; 3];
            for (c_slot, out_slot) in perm.iter().enumerate() {
                idx[*out_slot] = cidx[c_slot];
            }
            out.insert(idx, v);
        }
        Ok(out)
    }

    /// Closed-form tensors for non-increasing keys.
    fn canonical_tensor(&self, key: CouplingKey) -> CGTensor {
        let n = self.n;
        let d1 = Irrep::One.dim(n);
        let d2 = Irrep::Two.dim(n);
        let mut t = CGTensor::new(key.dims(n));
        use Irrep::{One, Two, Zero};
        match key.alphas {
            [Zero, Zero, Zero] => {
                t.insert([0, 0, 0], 1.0);
            }
            [One, One, Zero] => {
                for i in 0..d1 {
                    t.insert([i, i, 0], 1.0);
                }
            }
            [Two, Two, Zero] => {
                for a in 0..d2 {
                    t.insert([a, a, 0], 1.0);
                }
            }
            [One, One, One] => {
                for (idx, v) in &self.c111 {
                    t.insert(*idx, *v);
                }
            }
            [Two, One, One] => {
                for (a, m) in self.m211.iter().enumerate() {
                    for k in 0..d1 {
                        for l in 0..d1 {
                            t.insert([a, k, l], m[(k, l)]);
                        }
                    }
                }
            }
            [Two, Two, One] => {
                // Contraction of two 211 matrices through the 111 coupling:
                // entry (A, B, m) = <c111[:,:,m], M_A M_B^T>.
                let mut slices: Vec<DMatrix<f64>> = vec![DMatrix::zeros(d1, d1); d1];
                for ([i, j, k], v) in &self.c111 {
                    slices[*k][(*i, *j)] = *v;
                }
                for (a, ma) in self.m211.iter().enumerate() {
                    for (b, mb) in self.m211.iter().enumerate() {
                        let prod = ma * mb.transpose();
                        for (m, slice) in slices.iter().enumerate() {
                            let val = slice.dot(&prod);
                            t.insert([a, b, m], val);
                        }
                    }
                }
            }
            [Two, Two, Two] => match key.variant {
                CouplingVariant::I => {
                    for (a, ma) in self.m211.iter().enumerate() {
                        for (b, mb) in self.m211.iter().enumerate() {
                            let ab = ma * mb;
                            for (c, mc) in self.m211.iter().enumerate() {
                                t.insert([a, b, c], (&ab * mc).trace());
                            }
                        }
                    }
                }
                CouplingVariant::II => {
                    // entry (A,B,C) = 2 sum c111_{lnq} c111_{mpr}
                    //                 M_A[l,m] M_B[n,p] M_C[q,r],
                    // the factor matching the tables' normalization.
                    for (b, mb) in self.m211.iter().enumerate() {
                        for (c, mc) in self.m211.iter().enumerate() {
                            // z[l][m] = sum_{npqr} c111_{lnq} M_B[n,p]
                            //           M_C[q,r] c111_{mpr}
                            let mut y = vec![DMatrix::<f64>::zeros(d1, d1); d1];
                            for ([l, nn, q], v) in &self.c111 {
                                // y[l][p, r] accumulates over n and q.
                                for p in 0..d1 {
                                    let vb = mb[(*nn, p)];
                                    if vb == 0.0 {
                                        continue;
                                    }
                                    for r in 0..d1 {
                                        y[*l][(p, r)] += v * vb * mc[(*q, r)];
                                    }
                                }
                            }
                            let mut z = DMatrix::<f64>::zeros(d1, d1);
                            for ([m, p, r], v) in &self.c111 {
                                for l in 0..d1 {
                                    z[(l, *m)] += v * y[l][(*p, *r)];
                                }
                            }
                            for (a, ma) in self.m211.iter().enumerate() {
                                t.insert([a, b, c], 2.0 * ma.dot(&z));
                            }
                        }
                    }
                }
            },
            _ => unreachable!("canonical_order yields non-increasing keys"),
        }
        t
    }
}

/// Non-increasing reordering of an alpha triple. Returns the sorted triple
/// and, for each canonical slot position, the original slot it came from.
fn canonical_order(alphas: [Irrep; 3]) -> ([Irrep; 3], [usize; 3]) {
    let mut order = [0usize, 1, 2];
    // Stable sort by descending irrep.
    order.sort_by_key(|&s| std::cmp::Reverse(alphas[s] as usize));
    let canon = [alphas[order[0]], alphas[order[1]], alphas[order[2]]];
    (canon, order)
}

fn build_c111(n: ParticleCount) -> BTreeMap<[usize; 3], f64> {
    let d1 = Irrep::One.dim(n);
    let mut map = BTreeMap::new();
    let mut put = |i: usize, j: usize, k: usize| {
        let (fi, fj, fk) = (i as f64, j as f64, k as f64);
        let pref = (fi * (fi + 1.0) * fj * (fj + 1.0) * fk * (fk + 1.0)).sqrt();
        let d = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
        let v = -fi * (fi * fi - 1.0) * d(i, j) * d(i, k)
            + fi * (fi + 1.0) * theta(k as i64 - i as i64) * d(i, j)
            + fk * (fk + 1.0) * theta(j as i64 - k as i64) * d(i, k)
            + fj * (fj + 1.0) * theta(i as i64 - j as i64) * d(j, k);
        if v != 0.0 {
            map.insert([i - 1, j - 1, k - 1], v / pref);
        }
    };
    // Nonzero entries need at least two coincident indices.
    for a in 1..=d1 {
        for b in 1..=d1 {
            if a == b {
                put(a, a, a);
            } else {
                put(a, a, b);
                put(a, b, a);
                put(b, a, a);
            }
        }
    }
    map
}

fn build_m211(n: ParticleCount) -> Vec<DMatrix<f64>> {
    let d1 = Irrep::One.dim(n);
    let rows = two_sector_rows(n);
    let mut out = Vec::with_capacity(rows.len());
    for (i, j) in rows {
        let (fi, fj) = (i as f64, j as f64);
        let mut m = DMatrix::zeros(d1, d1);
        for k in 1..=d1 as i64 {
            for l in 1..=d1 as i64 {
                let (fk, fl) = (k as f64, l as f64);
                let d = |a: i64, b: i64| if a == b { 1.0 } else { 0.0 };
                let (ii, jj) = (i as i64, j as i64);
                let v = 2.0 * fi * (fi + 1.0) * (theta(-jj + l + 1) - theta(l - k)) * d(ii, k)
                    + 2.0 * fi * (fi + 1.0) * (theta(-jj + k + 1) - theta(k - l)) * d(ii, l)
                    + fi * (fi + 1.0)
                        * (fj - 2.0)
                        * (fj - 1.0)
                        * (d(ii, l) * d(jj - 1, k) + d(ii, k) * d(jj - 1, l))
                    - 2.0 * fl * (fl + 1.0) * theta(ii - k) * d(k, l)
                    + 2.0 * fi * (fi * fi - 1.0) * d(ii, k) * d(ii, l);
                if v != 0.0 {
                    let pref = (fi * (fi + 1.0) * (fj - 3.0) * (fj - 2.0) * fk * (fk + 1.0)
                        * fl
                        * (fl + 1.0))
                        .sqrt();
                    m[(k as usize - 1, l as usize - 1)] = v / pref;
                }
            }
        }
        out.push(m);
    }
    out
}

/// Builds the coupling tensor for a key at N.
pub fn cg(key: CouplingKey, n: ParticleCount) -> Result<CGTensor> {
    CgContext::new(n).tensor(key)
}

/// Maximum invariance residual of the coupling tensor over the group
/// generators (N-cycle and a transposition): the largest elementwise
/// deviation of (R x R x R) C from C.
pub fn check_invariance(key: CouplingKey, n: ParticleCount) -> Result<f64> {
    let tensor = cg(key, n)?.to_dense();
    let w = build_W(n);
    let mut worst: f64 = 0.0;
    for p in [Permutation::cycle(n), Permutation::transposition(n, 1, 2)] {
        let mut transformed = tensor.clone();
        for (mode, alpha) in key.alphas.iter().enumerate() {
            let r = induced_rep(&w, *alpha, &p);
            transformed = transformed.mode_mul(mode, &r);
        }
        worst = worst.max(transformed.sub_amax(&tensor));
    }
    Ok(worst)
}

fn rank_with_tolerance(m: DMatrix<f64>) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let svd = m.svd(false, false);
    let max = svd.singular_values.max();
    if max == 0.0 {
        return 0;
    }
    // The absolute floor keeps roundoff in a mathematically zero matrix
    // from registering as rank; genuine singular values here are far
    // larger.
    let tol = (max * 1e-9).max(1e-10);
    svd.singular_values.iter().filter(|s| **s > tol).count()
}

/// Rank of the span of the given columns, robust against columns that are
/// mathematically zero but carry roundoff: those are dropped by an absolute
/// norm floor before the SVD, and survivors are normalized so the relative
/// cutoff acts on directions rather than magnitudes.
fn span_rank(columns: &[Vec<f64>], rows: usize) -> usize {
    let norms: Vec<f64> = columns
        .iter()
        .map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    let max_norm = norms.iter().fold(0.0f64, |m, x| m.max(*x));
    let floor = 1e-8 * max_norm.max(1.0);
    let kept: Vec<usize> = (0..columns.len()).filter(|i| norms[*i] > floor).collect();
    if kept.is_empty() {
        return 0;
    }
    let mat = DMatrix::from_fn(rows, kept.len(), |r, c| {
        let i = kept[c];
        columns[i][r] / norms[i]
    });
    rank_with_tolerance(mat)
}

/// Relabeling orbits of a block's index tuples at N. Two tuples are in one
/// orbit when a particle relabeling maps one to the other slot-by-slot.
fn block_orbits(block: Block, n: ParticleCount) -> Vec<Vec<Vec<InternalIndex>>> {
    use crate::graphs::{catalog, BinaryInvariant};
    let mut tuples: Vec<Vec<InternalIndex>> = Vec::new();
    for id in catalog(block) {
        tuples.extend(BinaryInvariant::new(id, n).members());
    }
    let index: BTreeMap<Vec<InternalIndex>, usize> = tuples
        .iter()
        .enumerate()
        .map(|(i, t)| (t.clone(), i))
        .collect();

    // Union-find over tuple indices under the two generators.
    let mut parent: Vec<usize> = (0..tuples.len()).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for p in [Permutation::cycle(n), Permutation::transposition(n, 1, 2)] {
        for (i, t) in tuples.iter().enumerate() {
            let image: Vec<InternalIndex> = t.iter().map(|&s| p.permute_index(s)).collect();
            let j = index[&image];
            let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
            if ri != rj {
                parent[ri] = rj;
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<Vec<InternalIndex>>> = BTreeMap::new();
    for (i, t) in tuples.iter().enumerate() {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(t.clone());
    }
    groups.into_values().collect()
}

fn species_for(alpha: Irrep) -> &'static [CoordKind] {
    match alpha {
        Irrep::Zero | Irrep::One => &[CoordKind::Radial, CoordKind::Angular],
        Irrep::Two => &[CoordKind::Angular],
    }
}

/// Dimension of the invariant space of the sector (a1, a2, a3), computed as
/// the rank of the span of symmetry-transformed orbit indicators. Every
/// invariant sector tensor is the symmetry transform of an invariant index
/// tensor, and those are spanned by orbit indicators, so the rank equals
/// the number of independent couplings.
pub fn coupling_multiplicity(alphas: [Irrep; 3], n: ParticleCount) -> Result<usize> {
    if alphas.contains(&Irrep::Two) && n.get() < 4 {
        return Err(Error::TwoSectorUnavailable(n.get()));
    }
    let w = build_W(n);
    let dims = [alphas[0].dim(n), alphas[1].dim(n), alphas[2].dim(n)];
    let flat = dims[0] * dims[1] * dims[2];
    if flat == 0 {
        return Ok(0);
    }
    let mut columns: Vec<Vec<f64>> = Vec::new();
    for x1 in species_for(alphas[0]) {
        for x2 in species_for(alphas[1]) {
            for x3 in species_for(alphas[2]) {
                let kinds = [*x1, *x2, *x3].map(|k| match k {
                    CoordKind::Radial => SlotKind::Radial,
                    CoordKind::Angular => SlotKind::Pair,
                });
                let block = Block::from_slot_kinds(&kinds)?;
                // Member tuples are stored pair-slots-first; map each combo
                // slot to its position in that canonical order.
                let num_pairs = kinds.iter().filter(|k| **k == SlotKind::Pair).count();
                let (mut next_pair, mut next_radial) = (0usize, num_pairs);
                let cpos: Vec<usize> = kinds
                    .iter()
                    .map(|k| match k {
                        SlotKind::Pair => {
                            next_pair += 1;
                            next_pair - 1
                        }
                        SlotKind::Radial => {
                            next_radial += 1;
                            next_radial - 1
                        }
                    })
                    .collect();
                let blocks_w: Vec<&DMatrix<f64>> = alphas
                    .iter()
                    .zip([x1, x2, x3])
                    .map(|(a, x)| w.block(SectorLabel { irrep: *a, kind: *x }))
                    .collect();
                let slot_dims = [blocks_w[0].ncols(), blocks_w[1].ncols(), blocks_w[2].ncols()];
                for orbit in block_orbits(block, n) {
                    let mut indicator = Tensor3::zeros(slot_dims);
                    for tuple in &orbit {
                        let idx = [
                            species_offset(tuple[cpos[0]], n),
                            species_offset(tuple[cpos[1]], n),
                            species_offset(tuple[cpos[2]], n),
                        ];
                        *indicator.at_mut(idx) = 1.0;
                    }
                    let transformed = indicator
                        .mode_mul(0, blocks_w[0])
                        .mode_mul(1, blocks_w[1])
                        .mode_mul(2, blocks_w[2]);
                    columns.push(transformed.data);
                }
            }
        }
    }
    Ok(span_rank(&columns, flat))
}

/// Offset of an index within its own species block (radial: 0..N, pair:
/// 0..M).
fn species_offset(idx: InternalIndex, n: ParticleCount) -> usize {
    let flat = idx.flat_index(n).unwrap();
    if idx.is_pair() {
        flat - n.n()
    } else {
        flat
    }
}

/// Same multiplicity from the explicit invariance conditions: stacks
/// (R x R x R - 1) for both generators and counts the null space. Dense in
/// the cube of the sector dimensions; intended for the small cases that
/// cross-check [`coupling_multiplicity`].
pub fn coupling_multiplicity_dense(alphas: [Irrep; 3], n: ParticleCount) -> Result<usize> {
    if alphas.contains(&Irrep::Two) && n.get() < 4 {
        return Err(Error::TwoSectorUnavailable(n.get()));
    }
    let w = build_W(n);
    let dims = [alphas[0].dim(n), alphas[1].dim(n), alphas[2].dim(n)];
    let flat = dims[0] * dims[1] * dims[2];
    if flat == 0 {
        return Ok(0);
    }
    let mut system = DMatrix::zeros(2 * flat, flat);
    for (gi, p) in [Permutation::cycle(n), Permutation::transposition(n, 1, 2)]
        .iter()
        .enumerate()
    {
        let rs: Vec<DMatrix<f64>> = alphas.iter().map(|a| induced_rep(&w, *a, p)).collect();
        for r0 in 0..dims[0] {
            for r1 in 0..dims[1] {
                for r2 in 0..dims[2] {
                    let row = gi * flat + (r0 * dims[1] + r1) * dims[2] + r2;
                    for c0 in 0..dims[0] {
                        for c1 in 0..dims[1] {
                            for c2 in 0..dims[2] {
                                let col = (c0 * dims[1] + c1) * dims[2] + c2;
                                let mut v = rs[0][(r0, c0)] * rs[1][(r1, c1)] * rs[2][(r2, c2)];
                                if row % flat == col {
                                    v -= 1.0;
                                }
                                if v != 0.0 {
                                    system[(row, col)] = v;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(flat - rank_with_tolerance(system))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn pc(n: u32) -> ParticleCount {
        ParticleCount::new(n).unwrap()
    }

    #[test]
    fn key_parsing() {
        let k = CouplingKey::parse("211").unwrap();
        assert_eq!(k.alphas, [Irrep::Two, Irrep::One, Irrep::One]);
        assert_eq!(k.variant, CouplingVariant::I);
        let k = CouplingKey::parse("222:II").unwrap();
        assert_eq!(k.variant, CouplingVariant::II);
        assert!(CouplingKey::parse("21").is_err());
        assert!(CouplingKey::parse("213").is_err());
        assert!(CouplingKey::parse("222:X").is_err());
    }

    #[test]
    fn allowed_multisets() {
        use Irrep::{One, Two, Zero};
        let allowed = [
            [Zero, Zero, Zero],
            [Zero, One, One],
            [One, Zero, One],
            [Zero, Two, Two],
            [One, One, One],
            [One, One, Two],
            [One, Two, Two],
            [Two, Two, Two],
        ];
        for a in allowed {
            assert!(CouplingKey::multiset_allowed(a), "{a:?}");
        }
        let forbidden = [
            [Zero, Zero, One],
            [Zero, Zero, Two],
            [One, One, Zero],
            [Zero, One, Two],
            [Two, Zero, One],
        ];
        // 110 is allowed; keep the list honest.
        assert!(CouplingKey::multiset_allowed([One, One, Zero]));
        for a in [forbidden[0], forbidden[1], forbidden[3], forbidden[4]] {
            assert!(!CouplingKey::multiset_allowed(a), "{a:?}");
        }
    }

    #[test]
    fn c111_matches_hand_values() {
        let n = pc(4);
        let t = cg(CouplingKey::parse("111").unwrap(), n).unwrap();
        // 1-based (1,1,2) has value 1/sqrt(6); (1,1,1) vanishes.
        assert_abs_diff_eq!(t.entry([0, 0, 1]), 1.0 / 6f64.sqrt(), epsilon = 1e-14);
        assert_eq!(t.entry([0, 0, 0]), 0.0);
    }

    #[test]
    fn c111_fully_symmetric() {
        let n = pc(7);
        let t = cg(CouplingKey::parse("111").unwrap(), n).unwrap();
        for ([i, j, k], v) in t.iter() {
            for perm in [[i, k, j], [j, i, k], [j, k, i], [k, i, j], [k, j, i]] {
                assert_abs_diff_eq!(t.entry(perm), v, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn m211_symmetric_in_standard_slots() {
        let n = pc(8);
        let ctx = CgContext::new(n);
        for m in &ctx.m211 {
            assert!((m - m.transpose()).amax() < 1e-12);
        }
    }

    #[test]
    fn invariance_of_all_keys() {
        for n in [4u32, 5, 6, 7] {
            let n = pc(n);
            let mut keys = vec!["000", "110", "011", "220", "022", "111", "211", "121", "221"]
                .into_iter()
                .map(|s| CouplingKey::parse(s).unwrap())
                .collect::<Vec<_>>();
            keys.push(CouplingKey::parse("222").unwrap());
            if n.get() >= 6 {
                keys.push(CouplingKey::parse("222:II").unwrap());
            }
            for key in keys {
                if key.check_realized(n).is_err() {
                    assert_eq!((key.to_string().as_str(), n.get()), ("221", 4));
                    continue;
                }
                let res = check_invariance(key, n).unwrap();
                assert!(res < 1e-10, "key {key} at N={n}: residual {res:.3e}");
            }
        }
    }

    #[test]
    fn coupling_tensors_are_nonzero() {
        for n in [4u32, 5, 6] {
            let n = pc(n);
            for s in ["000", "110", "220", "111", "211", "221", "222"] {
                let key = CouplingKey::parse(s).unwrap();
                if key.check_realized(n).is_err() {
                    // 221-type coupling only exists from N = 5 up.
                    assert_eq!((s, n.get()), ("221", 4));
                    continue;
                }
                let t = cg(key, n).unwrap();
                assert!(t.amax() > 1e-9, "key {s} at N={n} is zero");
            }
        }
    }

    #[test]
    fn second_variant_redundant_below_n6() {
        for n in [4u32, 5] {
            let n = pc(n);
            let ctx = CgContext::new(n);
            let a = ctx
                .canonical_tensor(CouplingKey::parse("222").unwrap())
                .to_dense();
            let b = ctx
                .canonical_tensor(CouplingKey::with_variant(
                    [Irrep::Two; 3],
                    CouplingVariant::II,
                ))
                .to_dense();
            // Multiplicity one: the second closed form is a multiple of the
            // first, so it carries no new invariant and is not exposed.
            let gaa: f64 = a.data.iter().map(|x| x * x).sum();
            let gab: f64 = a.data.iter().zip(&b.data).map(|(x, y)| x * y).sum();
            let scale = gab / gaa;
            let mut resid = 0.0f64;
            for (x, y) in a.data.iter().zip(&b.data) {
                resid = resid.max((y - scale * x).abs());
            }
            assert!(resid < 1e-12, "second variant not proportional at N={n}");
            assert!(cg(CouplingKey::parse("222:II").unwrap(), n).is_err());
        }
    }

    #[test]
    fn two_variants_independent_at_n6() {
        let n = pc(6);
        let a = cg(CouplingKey::parse("222").unwrap(), n).unwrap().to_dense();
        let b = cg(CouplingKey::parse("222:II").unwrap(), n)
            .unwrap()
            .to_dense();
        // Gram matrix of the two flattened tensors has full rank.
        let gaa: f64 = a.data.iter().map(|x| x * x).sum();
        let gbb: f64 = b.data.iter().map(|x| x * x).sum();
        let gab: f64 = a.data.iter().zip(&b.data).map(|(x, y)| x * y).sum();
        let det = gaa * gbb - gab * gab;
        assert!(det > 1e-12 * gaa * gbb, "variants not independent");
    }

    #[test]
    fn permuted_keys_are_slot_permutations() {
        let n = pc(6);
        let base = cg(CouplingKey::parse("211").unwrap(), n).unwrap();
        let permuted = cg(CouplingKey::parse("121").unwrap(), n).unwrap();
        for ([a, k, l], v) in base.iter() {
            assert_abs_diff_eq!(permuted.entry([k, a, l]), v, epsilon = 1e-14);
        }
        let r = check_invariance(CouplingKey::parse("121").unwrap(), n).unwrap();
        assert!(r < 1e-10);
    }

    #[test]
    fn partial_trace_vanishes_unless_scalar_remains() {
        let n = pc(7);
        let d1 = Irrep::One.dim(n);
        let c211 = cg(CouplingKey::parse("211").unwrap(), n).unwrap();
        for a in 0..Irrep::Two.dim(n) {
            let tr: f64 = (0..d1).map(|k| c211.entry([a, k, k])).sum();
            assert_abs_diff_eq!(tr, 0.0, epsilon = 1e-12);
        }
        let c111 = cg(CouplingKey::parse("111").unwrap(), n).unwrap();
        for m in 0..d1 {
            let tr: f64 = (0..d1).map(|k| c111.entry([k, k, m])).sum();
            assert_abs_diff_eq!(tr, 0.0, epsilon = 1e-12);
        }
        // The scalar-coupled trace gives the sector dimension.
        let c110 = cg(CouplingKey::parse("110").unwrap(), n).unwrap();
        let tr: f64 = (0..d1).map(|k| c110.entry([k, k, 0])).sum();
        assert_abs_diff_eq!(tr, d1 as f64, epsilon = 1e-12);
    }

    #[test]
    fn multiplicities_match_between_oracles() {
        use Irrep::{One, Two, Zero};
        let cases: Vec<([Irrep; 3], u32)> = vec![
            ([Zero, Zero, Zero], 5),
            ([One, One, Zero], 6),
            ([One, One, One], 5),
            ([Two, One, One], 5),
            ([Two, Two, Zero], 5),
            ([Two, Two, One], 4),
            ([Two, Two, One], 5),
            ([Two, Two, Two], 5),
            ([Two, Two, Two], 6),
        ];
        for (alphas, n) in cases {
            let n = pc(n);
            let fast = coupling_multiplicity(alphas, n).unwrap();
            let dense = coupling_multiplicity_dense(alphas, n).unwrap();
            assert_eq!(fast, dense, "{alphas:?} at N={n}");
            assert_eq!(fast, CouplingKey::multiplicity(alphas, n), "{alphas:?} at N={n}");
        }
        // A key with no scalar content has multiplicity zero.
        let zero = coupling_multiplicity([Zero, Zero, One], pc(5)).unwrap();
        assert_eq!(zero, 0);
    }
}
