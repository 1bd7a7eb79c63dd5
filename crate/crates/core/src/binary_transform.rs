//! Symmetry-adapted transforms of binary invariants and their expansion
//! coefficients.
//!
//! Transforming a binary invariant's 0/1 tensor by the row blocks of
//! [`crate::symmetry::WMatrix`] compresses it enormously: every sector
//! component is a multiple of a coupling tensor (or of the identity, for
//! two-index invariants), and components whose irrep combination admits no
//! scalar vanish identically. The scalar in front is the beta coefficient.
//! This module carries closed-form beta tables for every catalog graph and
//! the machinery to extract the same numbers numerically from the raw
//! transform, which is how the tables are validated.

use crate::clebsch::{CgContext, CouplingKey, CouplingVariant, Tensor3};
use crate::coordinates::ParticleCount;
use crate::error::{Error, Result};
use crate::graphs::{BinaryInvariant, Block, GraphId, SlotKind};
use crate::symmetry::{build_W, CoordKind, Irrep, SectorLabel, WMatrix};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

/// Labels one cell of a graph's beta table: the irrep carried by each slot,
/// plus the variant for the doubly-degenerate all-two key.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
pub enum BetaKey {
    Rank1(Irrep),
    Rank2([Irrep; 2]),
    Rank3([Irrep; 3], CouplingVariant),
}

impl BetaKey {
    pub fn rank(self) -> usize {
        match self {
            BetaKey::Rank1(_) => 1,
            BetaKey::Rank2(_) => 2,
            BetaKey::Rank3(_, _) => 3,
        }
    }
}

impl fmt::Display for BetaKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BetaKey::Rank1(a) => write!(f, "{}", a.digit()),
            BetaKey::Rank2([a, b]) => write!(f, "{}{}", a.digit(), b.digit()),
            BetaKey::Rank3(alphas, variant) => {
                for a in alphas {
                    write!(f, "{}", a.digit())?;
                }
                if *variant == CouplingVariant::II {
                    write!(f, ":II")?;
                }
                Ok(())
            }
        }
    }
}

/// Irreps a slot of the given kind can carry.
fn slot_irreps(kind: SlotKind) -> &'static [Irrep] {
    match kind {
        SlotKind::Radial => &[Irrep::Zero, Irrep::One],
        SlotKind::Pair => &[Irrep::Zero, Irrep::One, Irrep::Two],
    }
}

fn coord_kind(kind: SlotKind) -> CoordKind {
    match kind {
        SlotKind::Radial => CoordKind::Radial,
        SlotKind::Pair => CoordKind::Angular,
    }
}

/// All beta keys realized for the block at N, in table order.
pub fn beta_keys(block: Block, n: ParticleCount) -> Vec<BetaKey> {
    let kinds = block.slot_kinds();
    match kinds.len() {
        1 => vec![BetaKey::Rank1(Irrep::Zero)],
        2 => slot_irreps(kinds[0])
            .iter()
            .filter(|a| {
                slot_irreps(kinds[1]).contains(a) && a.dim(n) > 0
            })
            .map(|a| BetaKey::Rank2([*a, *a]))
            .collect(),
        3 => {
            let mut keys = Vec::new();
            for a1 in slot_irreps(kinds[0]) {
                for a2 in slot_irreps(kinds[1]) {
                    for a3 in slot_irreps(kinds[2]) {
                        let alphas = [*a1, *a2, *a3];
                        let mult = CouplingKey::multiplicity(alphas, n);
                        if mult >= 1 {
                            keys.push(BetaKey::Rank3(alphas, CouplingVariant::I));
                        }
                        if mult >= 2 {
                            keys.push(BetaKey::Rank3(alphas, CouplingVariant::II));
                        }
                    }
                }
            }
            keys.sort();
            keys
        }
        _ => unreachable!("blocks have one, two or three slots"),
    }
}

/// Closed-form beta coefficient for a graph and key. `Ok(None)` means the
/// cell does not exist at this N (the sector component vanishes
/// identically); malformed keys error.
pub fn analytic_beta(id: GraphId, key: BetaKey, n: ParticleCount) -> Result<Option<f64>> {
    let block = id.block;
    let kinds = block.slot_kinds();
    if key.rank() != kinds.len() {
        return Err(Error::InputError(format!(
            "key {key} has rank {}, block {} has {} slots",
            key.rank(),
            block.name(),
            kinds.len()
        )));
    }
    let nf = n.get() as f64;
    let s = f64::sqrt;
    match key {
        BetaKey::Rank1(alpha) => {
            if alpha != Irrep::Zero {
                // Symmetric vectors have no component in the higher
                // sectors.
                return Ok(None);
            }
            Ok(Some(match block {
                Block::R => s(nf),
                Block::Gamma => s(nf * (nf - 1.0) / 2.0),
                _ => unreachable!("rank checked above"),
            }))
        }
        BetaKey::Rank2([a1, a2]) => {
            if !slot_irreps(kinds[0]).contains(&a1) || !slot_irreps(kinds[1]).contains(&a2) {
                return Err(Error::InputError(format!(
                    "key {key} puts a two-row irrep on a radial slot of {}",
                    block.name()
                )));
            }
            if a1 != a2 || a1.dim(n) == 0 {
                return Ok(None);
            }
            let col = a1 as usize;
            let v = match (block, id.class_label()) {
                (Block::Rr, 'a') => [1.0, 1.0, f64::NAN][col],
                (Block::Rr, 'b') => [nf - 1.0, -1.0, f64::NAN][col],
                (Block::GammaR, 'a') => [s(2.0 * (nf - 1.0)), s(nf - 2.0), f64::NAN][col],
                (Block::GammaR, 'b') => {
                    [0.5 * (nf - 2.0) * s(2.0 * (nf - 1.0)), -s(nf - 2.0), f64::NAN][col]
                }
                (Block::GammaGamma, 'a') => [1.0, 1.0, 1.0][col],
                (Block::GammaGamma, 'b') => [2.0 * (nf - 2.0), nf - 4.0, -2.0][col],
                (Block::GammaGamma, 'c') => {
                    [0.5 * (nf - 3.0) * (nf - 2.0), -(nf - 3.0), 1.0][col]
                }
                _ => unreachable!("rank-2 blocks and classes covered"),
            };
            Ok(Some(v))
        }
        BetaKey::Rank3(alphas, variant) => {
            for (a, k) in alphas.iter().zip(kinds) {
                if !slot_irreps(*k).contains(a) {
                    return Err(Error::InputError(format!(
                        "key {key} puts a two-row irrep on a radial slot of {}",
                        block.name()
                    )));
                }
            }
            let mult = CouplingKey::multiplicity(alphas, n);
            let index = if variant == CouplingVariant::II { 2 } else { 1 };
            if index > mult {
                return Ok(None);
            }
            Ok(Some(rank3_cell(id, alphas, variant, n)))
        }
    }
}

/// Closed forms for the rank-3 cells; caller has verified the key exists.
fn rank3_cell(id: GraphId, alphas: [Irrep; 3], variant: CouplingVariant, n: ParticleCount) -> f64 {
    let nf = n.get() as f64;
    let np = |k: u32| -> f64 { (0..k).map(|i| nf - i as f64).product() };
    let s = f64::sqrt;
    let digits: Vec<u8> = alphas.iter().map(|a| *a as u8).collect();
    let d = (digits[0], digits[1], digits[2]);
    let class = id.class_label();
    match id.block {
        Block::Rrr => {
            // Fully symmetric: the cell depends only on the multiset.
            let ones = digits.iter().filter(|x| **x == 1).count();
            match (class, ones) {
                ('a', 0) => 1.0 / s(nf),
                ('a', 2) => 1.0 / s(nf),
                ('a', 3) => 1.0,
                ('b', 0) => 3.0 * (nf - 1.0) / s(nf),
                ('b', 2) => (nf - 3.0) / s(nf),
                ('b', 3) => -3.0,
                ('c', 0) => (nf - 2.0) * (nf - 1.0) / s(nf),
                ('c', 2) => (2.0 - nf) / s(nf),
                ('c', 3) => 2.0,
                _ => unreachable!("no such cell"),
            }
        }
        Block::GammaRr => {
            // Symmetric in the two radial slots; columns keyed by the
            // angular-slot irrep and how many radial slots carry the
            // standard irrep.
            let r_ones = (digits[1] + digits[2]) as usize;
            let col = match (digits[0], r_ones) {
                (0, 0) => 0, // 000
                (1, 1) => 1, // 110 and 101
                (0, 2) => 2, // 011
                (1, 2) => 3, // 111
                (2, 2) => 4, // 211
                _ => unreachable!("no such cell"),
            };
            match class {
                'a' => [
                    2.0 * s((nf - 1.0) / (2.0 * nf)),
                    s((nf - 2.0) / nf),
                    s(2.0) * s(nf - 1.0) / s(nf),
                    s(nf - 2.0),
                    0.0,
                ][col],
                'b' => [
                    2.0 * s((nf - 1.0) / (2.0 * nf)),
                    s((nf - 2.0) / nf),
                    -s(2.0) / (s(nf - 1.0) * s(nf)),
                    -2.0 / s(nf - 2.0),
                    1.0,
                ][col],
                'c' => [
                    4.0 * (nf - 2.0) * s((nf - 1.0) / (2.0 * nf)),
                    (nf - 4.0) * s((nf - 2.0) / nf),
                    -2.0 * s(2.0) * (nf - 2.0) / (s(nf - 1.0) * s(nf)),
                    -2.0 * (nf - 4.0) / s(nf - 2.0),
                    -2.0,
                ][col],
                'd' => [
                    (nf - 2.0) * s((nf - 1.0) / (2.0 * nf)),
                    -s((nf - 2.0) / nf),
                    (nf - 2.0) * s(nf - 1.0) / (s(2.0) * s(nf)),
                    -s(nf - 2.0),
                    0.0,
                ][col],
                'e' => [
                    0.5 * np(4) * s(2.0 / (nf * nf * nf * (nf - 1.0))),
                    -(nf - 3.0) * s((nf - 2.0) / nf),
                    (3.0 - nf) * (nf - 2.0) / (s(2.0) * s(nf - 1.0) * s(nf)),
                    2.0 * (nf - 3.0) / s(nf - 2.0),
                    1.0,
                ][col],
                _ => unreachable!("no such class"),
            }
        }
        Block::GammaGammaR => {
            // Symmetric in the two angular slots.
            let col = match d {
                (0, 0, 0) => 0,
                (1, 1, 0) => 1,
                (0, 1, 1) | (1, 0, 1) => 2,
                (1, 1, 1) => 3,
                (2, 1, 1) | (1, 2, 1) => 4,
                (2, 2, 0) => 5,
                (2, 2, 1) => 6,
                _ => unreachable!("no such cell"),
            };
            let root = s(2.0) * s((nf - 2.0) / ((nf - 1.0) * nf));
            match class {
                'a' => [
                    2.0 / s(nf),
                    2.0 / s(nf),
                    root,
                    (nf - 4.0) / (nf - 2.0),
                    1.0 / s(nf - 2.0),
                    2.0 / s(nf),
                    1.0 / s(nf - 2.0),
                ][col],
                'b' => [
                    (nf - 2.0) / s(nf),
                    (nf - 2.0) / s(nf),
                    -root,
                    (4.0 - nf) / (nf - 2.0),
                    -1.0 / s(nf - 2.0),
                    (nf - 2.0) / s(nf),
                    -1.0 / s(nf - 2.0),
                ][col],
                'c' => [
                    2.0 * (nf - 2.0) / s(nf),
                    (nf - 4.0) / s(nf),
                    (nf - 2.0) * root,
                    (nf * nf - 5.0 * nf + 8.0) / (nf - 2.0),
                    -1.0 / s(nf - 2.0),
                    -2.0 / s(nf),
                    -1.0 / s(nf - 2.0),
                ][col],
                'd' => [
                    4.0 * (nf - 2.0) / s(nf),
                    2.0 * (nf - 4.0) / s(nf),
                    (nf - 4.0) * root,
                    (16.0 - 6.0 * nf) / (nf - 2.0),
                    (nf - 4.0) / s(nf - 2.0),
                    -4.0 / s(nf),
                    -2.0 / s(nf - 2.0),
                ][col],
                'e' => [
                    2.0 * (nf - 3.0) * (nf - 2.0) / s(nf),
                    (nf - 4.0) * (nf - 3.0) / s(nf),
                    -2.0 * (nf - 3.0) * root,
                    -(nf - 8.0) * (nf - 3.0) / (nf - 2.0),
                    (5.0 - nf) / s(nf - 2.0),
                    -2.0 * (nf - 3.0) / s(nf),
                    3.0 / s(nf - 2.0),
                ][col],
                'f' => [
                    2.0 * (nf - 3.0) * (nf - 2.0) / s(nf),
                    -4.0 * (nf - 3.0) / s(nf),
                    (nf - 4.0) * (nf - 3.0) * root / 2.0,
                    -2.0 * (nf - 4.0) * (nf - 3.0) / (nf - 2.0),
                    (4.0 - nf) / s(nf - 2.0),
                    4.0 / s(nf),
                    2.0 / s(nf - 2.0),
                ][col],
                'g' => [
                    (nf - 4.0) * (nf - 3.0) * (nf - 2.0) / (2.0 * s(nf)),
                    -(nf - 4.0) * (nf - 3.0) / s(nf),
                    -(nf - 4.0) * (nf - 3.0) * root / 2.0,
                    2.0 * (nf - 4.0) * (nf - 3.0) / (nf - 2.0),
                    (nf - 4.0) / s(nf - 2.0),
                    (nf - 4.0) / s(nf),
                    -2.0 / s(nf - 2.0),
                ][col],
                _ => unreachable!("no such class"),
            }
        }
        Block::GammaGammaGamma if !id.derivative_marked => {
            // Fully symmetric: cells depend only on the multiset.
            let mut ds = digits.clone();
            ds.sort_unstable();
            let key = (ds[0], ds[1], ds[2]);
            let cube = (2.0 / (nf * (nf - 1.0))).powf(1.5);
            let r2n = s(2.0) / s((nf - 1.0) * nf);
            let pw = (nf - 2.0).powf(1.5);
            let low = n.get() <= 5;
            match key {
                (0, 0, 0) => match class {
                    'a' => 0.5 * np(2) * cube,
                    'b' => np(3) * cube,
                    'c' => 3.0 * np(3) * cube,
                    'd' => np(4) * cube,
                    'e' => 3.0 * np(4) * cube,
                    'f' => 0.75 * np(4) * cube,
                    'g' => 1.5 * np(5) * cube,
                    'h' => 0.125 * np(6) * cube,
                    _ => unreachable!(),
                },
                (0, 1, 1) => match class {
                    'a' => r2n,
                    'b' => (nf - 4.0) * r2n,
                    'c' => 4.0 * (nf - 3.0) * r2n,
                    'd' => (nf - 4.0) * (nf - 3.0) * r2n,
                    'e' => 2.0 * (nf - 6.0) * (nf - 3.0) * r2n,
                    'f' => 0.5 * (nf - 6.0) * (nf - 3.0) * r2n,
                    'g' => 0.5 * (nf - 12.0) * (nf - 4.0) * (nf - 3.0) * r2n,
                    'h' => -0.5 * (nf - 5.0) * (nf - 4.0) * (nf - 3.0) * r2n,
                    _ => unreachable!(),
                },
                (1, 1, 1) => match class {
                    'a' => (nf - 4.0) / pw,
                    'b' => (16.0 - 6.0 * nf) / pw,
                    'c' => 3.0 * (nf - 4.0) * (nf - 4.0) / pw,
                    'd' => (nf - 3.0) * (nf * nf - 6.0 * nf + 16.0) / pw,
                    'e' => -12.0 * (nf - 4.0) * (nf - 3.0) / pw,
                    'f' => -3.0 * (nf - 4.0) * (nf - 3.0) / pw,
                    'g' => -3.0 * (nf - 8.0) * (nf - 4.0) * (nf - 3.0) / pw,
                    'h' => 2.0 * (nf - 5.0) * (nf - 4.0) * (nf - 3.0) / pw,
                    _ => unreachable!(),
                },
                (1, 1, 2) => match class {
                    'a' => 1.0 / (nf - 2.0),
                    'b' => (nf - 4.0) / (nf - 2.0),
                    'c' => 2.0 * (nf - 5.0) / (nf - 2.0),
                    'd' => -2.0 * (nf - 4.0) / (nf - 2.0),
                    'e' => (nf - 6.0) * (nf - 5.0) / (nf - 2.0),
                    'f' => (7.0 - 2.0 * nf) / (nf - 2.0),
                    'g' => -(nf - 4.0) * (2.0 * nf - 13.0) / (nf - 2.0),
                    'h' => (nf - 5.0) * (nf - 4.0) / (nf - 2.0),
                    _ => unreachable!(),
                },
                (0, 2, 2) => {
                    let base = s(2.0 / (nf * (nf - 1.0)));
                    match class {
                        'a' => base,
                        'b' => -2.0 * base,
                        'c' => 2.0 * (nf - 4.0) * base,
                        'd' => -2.0 * (nf - 3.0) * base,
                        'e' => -4.0 * (nf - 4.0) * base,
                        'f' => 0.5 * (nf * nf - 5.0 * nf + 10.0) * base,
                        'g' => -(nf - 7.0) * (nf - 4.0) * base,
                        'h' => 0.5 * (nf - 5.0) * (nf - 4.0) * base,
                        _ => unreachable!(),
                    }
                }
                (1, 2, 2) => {
                    let base = 1.0 / s(nf - 2.0);
                    match class {
                        'a' => base,
                        'b' => -2.0 * base,
                        'c' => (nf - 8.0) * base,
                        'd' => (6.0 - nf) * base,
                        'e' => -2.0 * (nf - 8.0) * base,
                        'f' => (5.0 - nf) * base,
                        'g' => (5.0 * nf - 28.0) * base,
                        'h' => -2.0 * (nf - 5.0) * base,
                        _ => unreachable!(),
                    }
                }
                (2, 2, 2) => {
                    let pair = match class {
                        'a' => (0.0, 0.25),
                        'b' => (1.0, 0.0),
                        'c' => (0.0, -1.5),
                        'd' => (0.0, 1.0),
                        'e' => (-3.0, 1.5),
                        'f' => (0.0, 0.75),
                        'g' => (3.0, -3.0),
                        'h' => (-1.0, 1.0),
                        _ => unreachable!(),
                    };
                    if low {
                        // Single coupling below N = 6; its coefficient is
                        // the sum of the two high-N ones.
                        pair.0 + pair.1
                    } else {
                        match variant {
                            CouplingVariant::I => pair.0,
                            CouplingVariant::II => pair.1,
                        }
                    }
                }
                _ => unreachable!("no such cell"),
            }
        }
        Block::GammaGammaGamma => {
            // Derivative-marked doubled-edge class: the first slot is
            // distinguished, only slots two and three are symmetric.
            let cube = (2.0 / (nf * (nf - 1.0))).powf(1.5);
            let r2n = s(2.0) / s((nf - 1.0) * nf);
            let low = n.get() <= 5;
            match d {
                (0, 0, 0) => 2.0 * np(3) * cube,
                (1, 1, 0) | (1, 0, 1) => s(2.0) * (3.0 * nf - 8.0) / s((nf - 1.0) * nf),
                (0, 1, 1) => 2.0 * s(2.0) * (nf - 4.0) / s((nf - 1.0) * nf),
                (1, 1, 1) => 2.0 * (nf - 4.0) * (nf - 4.0) / (nf - 2.0).powf(1.5),
                (2, 1, 1) => 2.0 - 4.0 / (nf - 2.0),
                (1, 2, 1) | (1, 1, 2) => (nf - 6.0) / (nf - 2.0),
                (0, 2, 2) => -4.0 * r2n,
                (2, 0, 2) | (2, 2, 0) => 2.0 * s(2.0) * (nf - 3.0) / s((nf - 1.0) * nf),
                (1, 2, 2) => -4.0 / s(nf - 2.0),
                (2, 2, 1) | (2, 1, 2) => (nf - 6.0) / s(nf - 2.0),
                (2, 2, 2) => {
                    if low {
                        -1.0
                    } else {
                        match variant {
                            CouplingVariant::I => 0.0,
                            CouplingVariant::II => -1.0,
                        }
                    }
                }
                _ => unreachable!("no such cell"),
            }
        }
        _ => unreachable!("rank-3 blocks covered"),
    }
}

/// Scale relating a block's tabulated coefficients for the given sector
/// triple to the uniform working normalization of the coupling tensors:
/// working = tabulated * scale.
///
/// The mixed two-angular-one-radial block tabulates its {2,2,1} cells
/// against a coupling sqrt(N-2) times larger than the contraction used
/// everywhere else (a relic of how the radial standard sector is embedded);
/// all other cells share the working convention.
pub fn coupling_scale(block: Block, alphas: [Irrep; 3], n: ParticleCount) -> f64 {
    let twos = alphas.iter().filter(|a| **a == Irrep::Two).count();
    let ones = alphas.iter().filter(|a| **a == Irrep::One).count();
    if block == Block::GammaGammaR && twos == 2 && ones == 1 {
        (n.get() as f64 - 2.0).sqrt()
    } else {
        1.0
    }
}

/// Closed-form coefficient in the working normalization of the coupling
/// tensors: the number x such that the graph's transform carries x times
/// the coupling tensor built by [`crate::clebsch`].
pub fn working_beta(id: GraphId, key: BetaKey, n: ParticleCount) -> Result<Option<f64>> {
    let v = analytic_beta(id, key, n)?;
    Ok(match (v, key) {
        (Some(x), BetaKey::Rank3(alphas, _)) => Some(x * coupling_scale(id.block, alphas, n)),
        (other, _) => other,
    })
}

/// Dense symmetry transform of a one-index invariant: W^alpha applied to
/// the all-ones vector of its species.
pub fn bw_rank1(id: GraphId, alpha: Irrep, w: &WMatrix) -> Result<DVector<f64>> {
    let n = w.n();
    let kinds = id.block.slot_kinds();
    if kinds.len() != 1 {
        return Err(Error::InputError(format!(
            "{} is not a one-index block",
            id.block.name()
        )));
    }
    let sector = SectorLabel::new(alpha, coord_kind(kinds[0]))?;
    let inv = BinaryInvariant::new(id, n);
    let mut ones = DVector::zeros(sector.cols(n));
    for t in inv.members() {
        ones[species_offset(t[0], n)] = 1.0;
    }
    Ok(w.block(sector) * ones)
}

/// Dense symmetry transform of a two-index invariant between the given
/// sector pair.
pub fn bw_rank2(id: GraphId, alphas: [Irrep; 2], w: &WMatrix) -> Result<DMatrix<f64>> {
    let n = w.n();
    let kinds = id.block.slot_kinds();
    if kinds.len() != 2 {
        return Err(Error::InputError(format!(
            "{} is not a two-index block",
            id.block.name()
        )));
    }
    let s1 = SectorLabel::new(alphas[0], coord_kind(kinds[0]))?;
    let s2 = SectorLabel::new(alphas[1], coord_kind(kinds[1]))?;
    let inv = BinaryInvariant::new(id, n);
    let mut b = DMatrix::zeros(s1.cols(n), s2.cols(n));
    for t in inv.members() {
        b[(species_offset(t[0], n), species_offset(t[1], n))] = 1.0;
    }
    Ok(w.block(s1) * b * w.block(s2).transpose())
}

/// Dense symmetry transform of a three-index invariant into the given
/// sector triple.
pub fn bw_rank3(id: GraphId, alphas: [Irrep; 3], w: &WMatrix) -> Result<Tensor3> {
    let n = w.n();
    let kinds = id.block.slot_kinds();
    if kinds.len() != 3 {
        return Err(Error::InputError(format!(
            "{} is not a three-index block",
            id.block.name()
        )));
    }
    let sectors: Vec<SectorLabel> = alphas
        .iter()
        .zip(kinds)
        .map(|(a, k)| SectorLabel::new(*a, coord_kind(*k)))
        .collect::<Result<_>>()?;
    let inv = BinaryInvariant::new(id, n);
    let mut b = Tensor3::zeros([
        sectors[0].cols(n),
        sectors[1].cols(n),
        sectors[2].cols(n),
    ]);
    for t in inv.members() {
        let idx = [
            species_offset(t[0], n),
            species_offset(t[1], n),
            species_offset(t[2], n),
        ];
        *b.at_mut(idx) = 1.0;
    }
    Ok(b
        .mode_mul(0, w.block(sectors[0]))
        .mode_mul(1, w.block(sectors[1]))
        .mode_mul(2, w.block(sectors[2])))
}

fn species_offset(idx: crate::coordinates::InternalIndex, n: ParticleCount) -> usize {
    let flat = idx.flat_index(n).unwrap();
    if idx.is_pair() {
        flat - n.n()
    } else {
        flat
    }
}

/// Largest component of the graph's transform in the given sector
/// combination; used to show that disallowed combinations vanish.
pub fn component_amax(id: GraphId, alphas: &[Irrep], w: &WMatrix) -> Result<f64> {
    match alphas.len() {
        1 => Ok(bw_rank1(id, alphas[0], w)?.amax()),
        2 => Ok(bw_rank2(id, [alphas[0], alphas[1]], w)?.amax()),
        3 => {
            let t = bw_rank3(id, [alphas[0], alphas[1], alphas[2]], w)?;
            Ok(t.data.iter().fold(0.0f64, |m, v| m.max(v.abs())))
        }
        _ => Err(Error::InputError("sector combination must have 1-3 slots".into())),
    }
}

/// Numerically extracted coefficients for one graph and sector triple: one
/// `(variant, value)` pair per independent coupling.
pub fn extract_beta3(
    id: GraphId,
    alphas: [Irrep; 3],
    w: &WMatrix,
    ctx: &CgContext,
) -> Result<Vec<(CouplingVariant, f64)>> {
    let n = w.n();
    let mult = CouplingKey::multiplicity(alphas, n);
    if mult == 0 {
        return Err(Error::CouplingUnavailable {
            key: BetaKey::Rank3(alphas, CouplingVariant::I).to_string(),
            n: n.get(),
        });
    }
    let b = bw_rank3(id, alphas, w)?;
    let c1 = ctx.tensor(CouplingKey::with_variant(alphas, CouplingVariant::I))?;
    if mult == 1 {
        let tol = 1e-9 * c1.amax();
        let idx = c1
            .first_above(tol)
            .ok_or_else(|| Error::CouplingVanishes {
                key: BetaKey::Rank3(alphas, CouplingVariant::I).to_string(),
                n: n.get(),
            })?;
        return Ok(vec![(CouplingVariant::I, b.at(idx) / c1.entry(idx))]);
    }
    // Two couplings: solve a 2x2 system at the first pair of index
    // positions where the coupling rows are independent.
    let c2 = ctx.tensor(CouplingKey::with_variant(alphas, CouplingVariant::II))?;
    let scale = c1.amax().max(c2.amax());
    let mut first: Option<([usize; 3], f64, f64)> = None;
    for i0 in 0..b.dims[0] {
        for i1 in 0..b.dims[1] {
            for i2 in 0..b.dims[2] {
                let idx = [i0, i1, i2];
                let (v1, v2) = (c1.entry(idx), c2.entry(idx));
                if v1.abs().max(v2.abs()) <= 1e-9 * scale {
                    continue;
                }
                match first {
                    None => first = Some((idx, v1, v2)),
                    Some((jdx, u1, u2)) => {
                        let det = u1 * v2 - u2 * v1;
                        if det.abs() > 1e-9 * scale * scale {
                            // Solve [u1 u2; v1 v2] [bI bII]^T = [r1 r2]^T.
                            let (r1, r2) = (b.at(jdx), b.at(idx));
                            return Ok(vec![
                                (CouplingVariant::I, (r1 * v2 - r2 * u2) / det),
                                (CouplingVariant::II, (r2 * u1 - r1 * v1) / det),
                            ]);
                        }
                    }
                }
            }
        }
    }
    Err(Error::SingularExtraction {
        key: BetaKey::Rank3(alphas, CouplingVariant::I).to_string(),
        n: n.get(),
    })
}

/// Numerically extracted coefficient for a two-index graph: the transform
/// is a multiple of the identity and the scalar is read off the corner.
pub fn extract_beta2(id: GraphId, alpha: Irrep, w: &WMatrix) -> Result<f64> {
    let n = w.n();
    if alpha.dim(n) == 0 {
        return Err(Error::CouplingUnavailable {
            key: BetaKey::Rank2([alpha, alpha]).to_string(),
            n: n.get(),
        });
    }
    Ok(bw_rank2(id, [alpha, alpha], w)?[(0, 0)])
}

/// Numerically extracted coefficient for a one-index graph (symmetric
/// sector only).
pub fn extract_beta1(id: GraphId, w: &WMatrix) -> Result<f64> {
    Ok(bw_rank1(id, Irrep::Zero, w)?[0])
}

/// One row of a table comparison.
#[derive(Clone, Debug, Serialize)]
pub struct BetaComparison {
    pub graph: String,
    pub key: String,
    pub analytic: f64,
    pub numeric: f64,
    pub abs_err: f64,
    pub rel_err: f64,
}

/// Full beta table of a graph at N: every realized key with its analytic
/// value.
pub fn beta_table_analytic(id: GraphId, n: ParticleCount) -> Result<BTreeMap<BetaKey, f64>> {
    let mut out = BTreeMap::new();
    for key in beta_keys(id.block, n) {
        if let Some(v) = analytic_beta(id, key, n)? {
            out.insert(key, v);
        }
    }
    Ok(out)
}

/// Full beta table of a graph at N, extracted numerically.
pub fn beta_table_numeric(
    id: GraphId,
    w: &WMatrix,
    ctx: &CgContext,
) -> Result<BTreeMap<BetaKey, f64>> {
    let n = w.n();
    let mut out = BTreeMap::new();
    for key in beta_keys(id.block, n) {
        match key {
            BetaKey::Rank1(_) => {
                out.insert(key, extract_beta1(id, w)?);
            }
            BetaKey::Rank2([a, _]) => {
                out.insert(key, extract_beta2(id, a, w)?);
            }
            BetaKey::Rank3(alphas, variant) => {
                if variant == CouplingVariant::II {
                    continue; // Filled together with variant I below.
                }
                // Report in the tables' convention.
                let scale = coupling_scale(id.block, alphas, n);
                for (v, value) in extract_beta3(id, alphas, w, ctx)? {
                    out.insert(BetaKey::Rank3(alphas, v), value / scale);
                }
            }
        }
    }
    Ok(out)
}

/// Compares analytic and numeric beta tables for every catalog graph at N.
pub fn verify_tables(n: ParticleCount) -> Result<Vec<BetaComparison>> {
    let w = build_W(n);
    let ctx = CgContext::new(n);
    let mut rows = Vec::new();
    for block in Block::ALL {
        for id in crate::graphs::derivative_catalog(block) {
            let analytic = beta_table_analytic(id, n)?;
            let numeric = beta_table_numeric(id, &w, &ctx)?;
            debug_assert_eq!(
                analytic.keys().collect::<Vec<_>>(),
                numeric.keys().collect::<Vec<_>>()
            );
            for (key, a) in &analytic {
                let m = numeric[key];
                let abs_err = (a - m).abs();
                let rel_err = if a.abs() > 1e-12 {
                    abs_err / a.abs()
                } else {
                    abs_err
                };
                rows.push(BetaComparison {
                    graph: id.to_string(),
                    key: key.to_string(),
                    analytic: *a,
                    numeric: m,
                    abs_err,
                    rel_err,
                });
            }
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn pc(n: u32) -> ParticleCount {
        ParticleCount::new(n).unwrap()
    }

    #[test]
    fn rank1_coefficients() {
        let n = pc(7);
        let w = build_W(n);
        let r = GraphId::parse("r-a").unwrap();
        let g = GraphId::parse("g-a").unwrap();
        assert_abs_diff_eq!(extract_beta1(r, &w).unwrap(), 7f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(extract_beta1(g, &w).unwrap(), 21f64.sqrt(), epsilon = 1e-12);
        // Higher sectors vanish.
        assert!(bw_rank1(r, Irrep::One, &w).unwrap().amax() < 1e-12);
        assert!(bw_rank1(g, Irrep::One, &w).unwrap().amax() < 1e-12);
        assert!(bw_rank1(g, Irrep::Two, &w).unwrap().amax() < 1e-12);
    }

    #[test]
    fn rank2_transforms_are_scalar_matrices() {
        let n = pc(6);
        let w = build_W(n);
        for block in [Block::Rr, Block::GammaR, Block::GammaGamma] {
            for id in crate::graphs::catalog(block) {
                for key in beta_keys(block, n) {
                    let BetaKey::Rank2([a, _]) = key else { unreachable!() };
                    let m = bw_rank2(id, [a, a], &w).unwrap();
                    let beta = m[(0, 0)];
                    let eye = DMatrix::identity(m.nrows(), m.ncols());
                    assert!(
                        (&m - beta * eye).amax() < 1e-10,
                        "{id} key {key} not scalar"
                    );
                    let expect = analytic_beta(id, key, n).unwrap().unwrap();
                    assert_abs_diff_eq!(beta, expect, epsilon = 1e-10);
                }
            }
        }
    }

    #[test]
    fn cross_sector_components_vanish() {
        let n = pc(6);
        let w = build_W(n);
        use Irrep::{One, Two, Zero};
        for id in crate::graphs::catalog(Block::GammaGamma) {
            for combo in [[Zero, One], [One, Two], [Zero, Two], [Two, One]] {
                let m = bw_rank2(id, combo, &w).unwrap();
                assert!(m.amax() < 1e-10, "{id} {combo:?}");
            }
        }
        for id in crate::graphs::catalog(Block::Rrr) {
            for combo in [[Zero, Zero, One], [One, Zero, Zero], [Zero, One, Zero]] {
                let amax = component_amax(id, &combo, &w).unwrap();
                assert!(amax < 1e-10, "{id} {combo:?}");
            }
        }
    }

    #[test]
    fn tables_verify_at_small_n() {
        for nn in [5u32, 6, 7] {
            let n = pc(nn);
            for row in verify_tables(n).unwrap() {
                assert!(
                    row.rel_err < 1e-9,
                    "N={nn} {} key {}: analytic {} vs numeric {}",
                    row.graph,
                    row.key,
                    row.analytic,
                    row.numeric
                );
            }
        }
    }

    #[test]
    fn key_enumeration_matches_table_shapes() {
        let n = pc(6);
        // Two-index angular block has three diagonal cells.
        assert_eq!(beta_keys(Block::GammaGamma, n).len(), 3);
        // At N=6 the all-two key carries two couplings: the full angular
        // cube has 3^3 ordered combinations minus the forbidden ones, plus
        // one extra for the second coupling.
        let keys = beta_keys(Block::GammaGammaGamma, n);
        let with_two_couplings = keys
            .iter()
            .filter(|k| matches!(k, BetaKey::Rank3(_, CouplingVariant::II)))
            .count();
        assert_eq!(with_two_couplings, 1);
        // 000 and 111 once each, the four mixed multisets three orderings
        // each, 222 twice.
        assert_eq!(keys.len(), 1 + 1 + 4 * 3 + 2);
        // At N=4 the {1,2,2} cells drop out and 222 has one coupling.
        let n4 = pc(4);
        let keys4 = beta_keys(Block::GammaGammaGamma, n4);
        assert_eq!(keys4.len(), 1 + 1 + 3 * 3 + 1);
    }

    #[test]
    fn working_convention_reconstructs_transforms() {
        // Summing working-convention coefficients times coupling tensors
        // over the realized keys reproduces the raw transform elementwise,
        // sector triple by sector triple.
        let n = pc(6);
        let w = build_W(n);
        let ctx = CgContext::new(n);
        for id in [
            GraphId::parse("ggr-e").unwrap(),
            GraphId::parse("ggg-d").unwrap(),
            GraphId::parse("ggg-c*").unwrap(),
            GraphId::parse("grr-c").unwrap(),
        ] {
            for key in beta_keys(id.block, n) {
                let BetaKey::Rank3(alphas, variant) = key else { unreachable!() };
                if variant == CouplingVariant::II {
                    continue;
                }
                let b = bw_rank3(id, alphas, &w).unwrap();
                let mut recon = Tensor3::zeros(b.dims);
                let mult = CouplingKey::multiplicity(alphas, n);
                for v in [CouplingVariant::I, CouplingVariant::II].into_iter().take(mult) {
                    let beta = working_beta(id, BetaKey::Rank3(alphas, v), n)
                        .unwrap()
                        .unwrap();
                    let c = ctx
                        .tensor(CouplingKey::with_variant(alphas, v))
                        .unwrap();
                    for (idx, val) in c.iter() {
                        *recon.at_mut(idx) += beta * val;
                    }
                }
                let err = recon.sub_amax(&b);
                assert!(err < 1e-9, "{id} {key}: reconstruction error {err:.3e}");
            }
        }
    }

    #[test]
    fn marked_and_plain_doubled_edge_tables_are_consistent() {
        // The marked refinement keeps two of the three arrangements, and
        // its fully symmetric cells scale accordingly.
        for nn in [5u32, 8] {
            let n = pc(nn);
            let plain = GraphId::parse("ggg-c").unwrap();
            let marked = GraphId::parse("ggg-c*").unwrap();
            let a = analytic_beta(plain, BetaKey::Rank3([Irrep::Zero; 3], CouplingVariant::I), n)
                .unwrap()
                .unwrap();
            let m = analytic_beta(marked, BetaKey::Rank3([Irrep::Zero; 3], CouplingVariant::I), n)
                .unwrap()
                .unwrap();
            assert_abs_diff_eq!(m / a, 2.0 / 3.0, epsilon = 1e-12);
        }
    }
}
