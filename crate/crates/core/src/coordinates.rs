//! Internal-coordinate bookkeeping for N identical particles.
//!
//! The internal coordinate vector holds the N radii first, then the
//! M = N(N-1)/2 pair cosines ordered by larger label, then smaller:
//! (12), (13), (23), (14), (24), (34), (15), ... Particle labels are
//! 1-based throughout; flat offsets into the coordinate vector are 0-based.

use crate::error::{Error, Result};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::fmt;

/// Number of particles N. Guaranteed N >= 3 so that pair coordinates exist
/// in every block.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParticleCount(u32);

impl ParticleCount {
    pub fn new(n: u32) -> Result<Self> {
        if n < 3 {
            return Err(Error::ParticleCountTooSmall(n));
        }
        Ok(Self(n))
    }

    pub fn get(self) -> u32 {
        self.0
    }

    pub fn n(self) -> usize {
        self.0 as usize
    }

    /// M = N(N-1)/2 pair coordinates.
    pub fn num_pairs(self) -> usize {
        let n = self.n();
        n * (n - 1) / 2
    }

    /// P = N(N+1)/2 internal coordinates (radii plus pairs).
    pub fn num_coords(self) -> usize {
        let n = self.n();
        n * (n + 1) / 2
    }
}

impl fmt::Debug for ParticleCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "N={}", self.0)
    }
}

impl fmt::Display for ParticleCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One internal coordinate: a radius or an unordered pair cosine.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InternalIndex {
    /// Radius of particle i, 1 <= i <= N.
    Radial(u32),
    /// Cosine coordinate of the unordered pair {i, j}, stored with i < j.
    Pair(u32, u32),
}

impl InternalIndex {
    pub fn radial(i: u32) -> Self {
        assert!(i >= 1, "particle labels are 1-based");
        InternalIndex::Radial(i)
    }

    /// Builds a pair index from two distinct labels in either order.
    pub fn pair(i: u32, j: u32) -> Self {
        assert!(i >= 1 && j >= 1, "particle labels are 1-based");
        assert_ne!(i, j, "pair index requires distinct labels");
        if i < j {
            InternalIndex::Pair(i, j)
        } else {
            InternalIndex::Pair(j, i)
        }
    }

    pub fn is_radial(self) -> bool {
        matches!(self, InternalIndex::Radial(_))
    }

    pub fn is_pair(self) -> bool {
        matches!(self, InternalIndex::Pair(_, _))
    }

    /// Labels touched by this coordinate: one for a radius, two for a pair.
    pub fn labels(self) -> impl Iterator<Item = u32> {
        match self {
            InternalIndex::Radial(i) => [i, 0].into_iter().take(1),
            InternalIndex::Pair(i, j) => [i, j].into_iter().take(2),
        }
    }

    pub fn contains(self, label: u32) -> bool {
        match self {
            InternalIndex::Radial(i) => i == label,
            InternalIndex::Pair(i, j) => i == label || j == label,
        }
    }

    fn check(self, n: ParticleCount) -> Result<()> {
        let bound = n.get();
        match self {
            InternalIndex::Radial(i) => {
                if i < 1 || i > bound {
                    return Err(Error::LabelOutOfRange { label: i, n: bound });
                }
            }
            InternalIndex::Pair(i, j) => {
                if i == j {
                    return Err(Error::DegeneratePair(i, j));
                }
                for label in [i, j] {
                    if label < 1 || label > bound {
                        return Err(Error::LabelOutOfRange { label, n: bound });
                    }
                }
            }
        }
        Ok(())
    }

    /// 0-based offset into the internal coordinate vector.
    ///
    /// Radii occupy offsets 0..N; pair (i, j) with i < j sits at
    /// N + (j-1)(j-2)/2 + (i-1).
    pub fn flat_index(self, n: ParticleCount) -> Result<usize> {
        self.check(n)?;
        Ok(match self {
            InternalIndex::Radial(i) => (i - 1) as usize,
            InternalIndex::Pair(i, j) => {
                let (i, j) = (i as usize, j as usize);
                n.n() + (j - 1) * (j - 2) / 2 + (i - 1)
            }
        })
    }

    /// Inverse of [`flat_index`](Self::flat_index).
    pub fn from_flat(offset: usize, n: ParticleCount) -> Result<Self> {
        let coords = n.num_coords();
        if offset >= coords {
            return Err(Error::OffsetOutOfRange { offset, coords });
        }
        if offset < n.n() {
            return Ok(InternalIndex::Radial(offset as u32 + 1));
        }
        let mut rest = offset - n.n();
        // Pairs with larger label j occupy a run of j-1 offsets.
        let mut j = 2usize;
        while rest >= j - 1 {
            rest -= j - 1;
            j += 1;
        }
        Ok(InternalIndex::Pair(rest as u32 + 1, j as u32))
    }
}

impl PartialOrd for InternalIndex {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for InternalIndex {
    /// Orders indices exactly as their flat offsets: radii first by label,
    /// then pairs by (larger label, smaller label).
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        use InternalIndex::*;
        match (self, other) {
            (Radial(a), Radial(b)) => a.cmp(b),
            (Radial(_), Pair(_, _)) => std::cmp::Ordering::Less,
            (Pair(_, _), Radial(_)) => std::cmp::Ordering::Greater,
            (Pair(a, b), Pair(c, d)) => (b, a).cmp(&(d, c)),
        }
    }
}

impl fmt::Debug for InternalIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InternalIndex::Radial(i) => write!(f, "r{i}"),
            InternalIndex::Pair(i, j) => write!(f, "g({i},{j})"),
        }
    }
}

impl fmt::Display for InternalIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Iterator over all internal indices in flat order.
pub fn all_indices(n: ParticleCount) -> impl Iterator<Item = InternalIndex> {
    (0..n.num_coords()).map(move |ofs| InternalIndex::from_flat(ofs, n).unwrap())
}

/// Iterator over pair indices in flat order.
pub fn pair_indices(n: ParticleCount) -> impl Iterator<Item = InternalIndex> {
    (n.n()..n.num_coords()).map(move |ofs| InternalIndex::from_flat(ofs, n).unwrap())
}

/// A permutation of the particle labels 1..=N, stored as its image array:
/// `image[i-1]` is where label i goes.
#[derive(Clone, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
pub struct Permutation {
    image: Vec<u32>,
}

impl Permutation {
    pub fn identity(n: ParticleCount) -> Self {
        Self {
            image: (1..=n.get()).collect(),
        }
    }

    pub fn from_image(image: Vec<u32>) -> Result<Self> {
        let n = image.len() as u32;
        let mut seen = vec![false; image.len()];
        for &v in &image {
            if v < 1 || v > n || seen[(v - 1) as usize] {
                return Err(Error::InvalidPermutation(image.clone(), n));
            }
            seen[(v - 1) as usize] = true;
        }
        Ok(Self { image })
    }

    /// The transposition (a b), other labels fixed.
    pub fn transposition(n: ParticleCount, a: u32, b: u32) -> Self {
        assert!(a >= 1 && b >= 1 && a <= n.get() && b <= n.get());
        let mut image: Vec<u32> = (1..=n.get()).collect();
        image.swap((a - 1) as usize, (b - 1) as usize);
        Self { image }
    }

    /// The N-cycle (1 2 ... N).
    pub fn cycle(n: ParticleCount) -> Self {
        let image: Vec<u32> = (1..=n.get()).map(|i| i % n.get() + 1).collect();
        Self { image }
    }

    pub fn n(&self) -> ParticleCount {
        ParticleCount::new(self.image.len() as u32).expect("stored permutation has n >= 3")
    }

    pub fn apply(&self, label: u32) -> u32 {
        self.image[(label - 1) as usize]
    }

    /// Composition acting as functions: `(self.compose(other))(x) = self(other(x))`.
    pub fn compose(&self, other: &Permutation) -> Permutation {
        assert_eq!(self.image.len(), other.image.len());
        Permutation {
            image: other.image.iter().map(|&v| self.apply(v)).collect(),
        }
    }

    pub fn inverse(&self) -> Permutation {
        let mut image = vec![0u32; self.image.len()];
        for (i, &v) in self.image.iter().enumerate() {
            image[(v - 1) as usize] = i as u32 + 1;
        }
        Permutation { image }
    }

    /// Relabels an internal coordinate: radii map through the permutation,
    /// pairs map elementwise and are re-sorted.
    pub fn permute_index(&self, idx: InternalIndex) -> InternalIndex {
        match idx {
            InternalIndex::Radial(i) => InternalIndex::Radial(self.apply(i)),
            InternalIndex::Pair(i, j) => InternalIndex::pair(self.apply(i), self.apply(j)),
        }
    }

    /// P x P orthogonal matrix T with T e_nu = e_{p(nu)}, so coordinate
    /// vectors transform as y -> T y under the relabeling p. Composition is a
    /// homomorphism: T(p o q) = T(p) T(q).
    pub fn permutation_matrix(&self, n: ParticleCount) -> DMatrix<f64> {
        let p = n.num_coords();
        let mut t = DMatrix::zeros(p, p);
        for idx in all_indices(n) {
            let from = idx.flat_index(n).unwrap();
            let to = self.permute_index(idx).flat_index(n).unwrap();
            t[(to, from)] = 1.0;
        }
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn n4() -> ParticleCount {
        ParticleCount::new(4).unwrap()
    }

    #[test]
    fn counts() {
        let n = ParticleCount::new(5).unwrap();
        assert_eq!(n.n(), 5);
        assert_eq!(n.num_pairs(), 10);
        assert_eq!(n.num_coords(), 15);
        assert!(ParticleCount::new(2).is_err());
    }

    #[test]
    fn flat_index_layout() {
        struct Case {
            idx: InternalIndex,
            offset: usize,
        }
        let cases = [
            Case { idx: InternalIndex::radial(1), offset: 0 },
            Case { idx: InternalIndex::radial(4), offset: 3 },
            Case { idx: InternalIndex::pair(1, 2), offset: 4 },
            Case { idx: InternalIndex::pair(1, 3), offset: 5 },
            Case { idx: InternalIndex::pair(2, 3), offset: 6 },
            Case { idx: InternalIndex::pair(1, 4), offset: 7 },
            Case { idx: InternalIndex::pair(2, 4), offset: 8 },
            Case { idx: InternalIndex::pair(3, 4), offset: 9 },
        ];
        for case in cases {
            assert_eq!(case.idx.flat_index(n4()).unwrap(), case.offset, "{:?}", case.idx);
            assert_eq!(InternalIndex::from_flat(case.offset, n4()).unwrap(), case.idx);
        }
    }

    #[test]
    fn pair_constructor_sorts() {
        assert_eq!(InternalIndex::pair(3, 1), InternalIndex::Pair(1, 3));
    }

    #[test]
    fn ordering_matches_flat_offsets() {
        let n = ParticleCount::new(6).unwrap();
        let all: Vec<_> = all_indices(n).collect();
        for w in all.windows(2) {
            assert!(w[0] < w[1]);
        }
    }

    #[test]
    fn out_of_range_rejected() {
        assert!(InternalIndex::radial(5).flat_index(n4()).is_err());
        assert!(InternalIndex::pair(1, 5).flat_index(n4()).is_err());
        assert!(InternalIndex::from_flat(10, n4()).is_err());
    }

    #[test]
    fn permutation_validation() {
        assert!(Permutation::from_image(vec![1, 2, 2, 4]).is_err());
        assert!(Permutation::from_image(vec![1, 2, 5, 4]).is_err());
        assert!(Permutation::from_image(vec![2, 3, 1, 4]).is_ok());
    }

    #[test]
    fn inverse_and_compose() {
        let p = Permutation::from_image(vec![2, 3, 1, 4]).unwrap();
        let q = p.inverse();
        assert_eq!(p.compose(&q), Permutation::identity(n4()));
        assert_eq!(q.compose(&p), Permutation::identity(n4()));
    }

    #[test]
    fn permute_index_tracks_labels() {
        let p = Permutation::from_image(vec![2, 3, 1, 4]).unwrap();
        assert_eq!(p.permute_index(InternalIndex::radial(1)), InternalIndex::radial(2));
        assert_eq!(
            p.permute_index(InternalIndex::pair(1, 3)),
            InternalIndex::pair(1, 2)
        );
    }

    fn arb_perm(n: u32) -> impl Strategy<Value = Permutation> {
        Just(()).prop_perturb(move |_, mut rng| {
            let mut image: Vec<u32> = (1..=n).collect();
            for i in (1..image.len()).rev() {
                let j = (rng.next_u32() as usize) % (i + 1);
                image.swap(i, j);
            }
            Permutation::from_image(image).unwrap()
        })
    }

    proptest! {
        #[test]
        fn matrix_is_homomorphism((p, q) in (arb_perm(6), arb_perm(6))) {
            let n = ParticleCount::new(6).unwrap();
            let lhs = p.compose(&q).permutation_matrix(n);
            let rhs = p.permutation_matrix(n) * q.permutation_matrix(n);
            prop_assert!((lhs - rhs).amax() == 0.0);
        }

        #[test]
        fn matrix_is_orthogonal(p in arb_perm(6)) {
            let n = ParticleCount::new(6).unwrap();
            let t = p.permutation_matrix(n);
            let eye = DMatrix::<f64>::identity(n.num_coords(), n.num_coords());
            prop_assert!((&t * t.transpose() - eye).amax() == 0.0);
        }

        #[test]
        fn flat_roundtrip(offset in 0usize..21) {
            let n = ParticleCount::new(6).unwrap();
            let idx = InternalIndex::from_flat(offset, n).unwrap();
            prop_assert_eq!(idx.flat_index(n).unwrap(), offset);
        }
    }
}
