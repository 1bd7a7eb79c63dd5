//! Multigraph classification of tensor index tuples and the implicit 0/1
//! invariant tensors attached to each class.
//!
//! An index tuple over internal coordinates maps to a multigraph: each pair
//! coordinate contributes an edge between its two particle labels, each
//! radial coordinate a loop at its label. Tuples whose multigraphs are
//! isomorphic form one class; the invariant tensor of a class is 1 on its
//! tuples and 0 elsewhere. Tensors invariant under particle relabeling are
//! constant on classes, so these 0/1 tensors span every invariant block.
//!
//! One rank-3 class needs a finer split when the first slot plays a
//! distinguished role (the multiplying coordinate of a derivative-type
//! operator): the doubled-edge-plus-incident-edge class splits by whether
//! the distinguished slot holds a copy of the doubled edge. That refinement
//! carries the `derivative_marked` flag.

use crate::coordinates::{pair_indices, InternalIndex, ParticleCount};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt;

/// Kind of a tensor slot: radial or pair coordinate.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
pub enum SlotKind {
    Radial,
    Pair,
}

/// Role a slot plays in the operator the tensor multiplies. Only the
/// distinction "exactly one coordinate slot" matters, and only for the
/// doubled-edge rank-3 class.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub enum SlotRole {
    Coordinate,
    Derivative,
}

/// Canonical tensor blocks, pair slots listed before radial slots.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
pub enum Block {
    /// Rank 1, one radial slot.
    R,
    /// Rank 1, one pair slot.
    Gamma,
    /// Rank 2, two radial slots.
    Rr,
    /// Rank 2, pair then radial.
    GammaR,
    /// Rank 2, two pair slots.
    GammaGamma,
    /// Rank 3, three radial slots.
    Rrr,
    /// Rank 3, pair then two radial.
    GammaRr,
    /// Rank 3, two pair then radial.
    GammaGammaR,
    /// Rank 3, three pair slots.
    GammaGammaGamma,
}

impl Block {
    pub const ALL: [Block; 9] = [
        Block::R,
        Block::Gamma,
        Block::Rr,
        Block::GammaR,
        Block::GammaGamma,
        Block::Rrr,
        Block::GammaRr,
        Block::GammaGammaR,
        Block::GammaGammaGamma,
    ];

    pub fn slot_kinds(self) -> &'static [SlotKind] {
        use SlotKind::{Pair, Radial};
        match self {
            Block::R => &[Radial],
            Block::Gamma => &[Pair],
            Block::Rr => &[Radial, Radial],
            Block::GammaR => &[Pair, Radial],
            Block::GammaGamma => &[Pair, Pair],
            Block::Rrr => &[Radial, Radial, Radial],
            Block::GammaRr => &[Pair, Radial, Radial],
            Block::GammaGammaR => &[Pair, Pair, Radial],
            Block::GammaGammaGamma => &[Pair, Pair, Pair],
        }
    }

    pub fn rank(self) -> usize {
        self.slot_kinds().len()
    }

    /// Number of classes in this block's catalog.
    pub fn class_count(self) -> usize {
        match self {
            Block::R | Block::Gamma => 1,
            Block::Rr | Block::GammaR => 2,
            Block::GammaGamma | Block::Rrr => 3,
            Block::GammaRr => 5,
            Block::GammaGammaR => 7,
            Block::GammaGammaGamma => 8,
        }
    }

    /// Canonical block for an arbitrary arrangement of slot kinds.
    pub fn from_slot_kinds(kinds: &[SlotKind]) -> Result<Block> {
        let pairs = kinds.iter().filter(|k| **k == SlotKind::Pair).count();
        let block = match (kinds.len(), pairs) {
            (1, 0) => Block::R,
            (1, 1) => Block::Gamma,
            (2, 0) => Block::Rr,
            (2, 1) => Block::GammaR,
            (2, 2) => Block::GammaGamma,
            (3, 0) => Block::Rrr,
            (3, 1) => Block::GammaRr,
            (3, 2) => Block::GammaGammaR,
            (3, 3) => Block::GammaGammaGamma,
            _ => return Err(Error::UnknownBlock(format!("{kinds:?}"))),
        };
        Ok(block)
    }

    pub fn name(self) -> &'static str {
        match self {
            Block::R => "r",
            Block::Gamma => "g",
            Block::Rr => "rr",
            Block::GammaR => "gr",
            Block::GammaGamma => "gg",
            Block::Rrr => "rrr",
            Block::GammaRr => "grr",
            Block::GammaGammaR => "ggr",
            Block::GammaGammaGamma => "ggg",
        }
    }

    pub fn parse(s: &str) -> Result<Block> {
        Block::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| Error::UnknownBlock(s.to_string()))
    }
}

impl fmt::Display for Block {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One multigraph class of one block, optionally refined by the
/// distinguished-slot marking.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GraphId {
    pub block: Block,
    pub class: u8,
    pub derivative_marked: bool,
}

impl GraphId {
    pub fn new(block: Block, class: u8) -> Self {
        assert!((class as usize) < block.class_count());
        GraphId { block, class, derivative_marked: false }
    }

    /// The refinement of the doubled-edge-plus-incident-edge class whose
    /// first slot holds a copy of the doubled edge.
    pub fn marked(block: Block, class: u8) -> Self {
        assert_eq!(
            (block, class),
            (Block::GammaGammaGamma, 2),
            "only the doubled-edge-plus-incident-edge class has a marked refinement"
        );
        GraphId { block, class, derivative_marked: true }
    }

    pub fn class_label(self) -> char {
        (b'a' + self.class) as char
    }

    pub fn rank(self) -> usize {
        self.block.rank()
    }

    /// Fewest distinct particle labels a member tuple can touch; the class
    /// is empty for smaller N.
    pub fn min_vertices(self) -> u32 {
        match (self.block, self.class) {
            (Block::R, 0) => 1,
            (Block::Gamma, 0) => 2,
            (Block::Rr, c) => 1 + c as u32,
            (Block::GammaR, c) => 2 + c as u32,
            (Block::GammaGamma, c) => 2 + c as u32,
            (Block::Rrr, c) => 1 + c as u32,
            (Block::GammaRr, 0) | (Block::GammaRr, 1) => 2,
            (Block::GammaRr, 2) | (Block::GammaRr, 3) => 3,
            (Block::GammaRr, 4) => 4,
            (Block::GammaGammaR, 0) => 2,
            (Block::GammaGammaR, 1..=3) => 3,
            (Block::GammaGammaR, 4) | (Block::GammaGammaR, 5) => 4,
            (Block::GammaGammaR, 6) => 5,
            (Block::GammaGammaGamma, 0) => 2,
            (Block::GammaGammaGamma, 1) | (Block::GammaGammaGamma, 2) => 3,
            (Block::GammaGammaGamma, 3..=5) => 4,
            (Block::GammaGammaGamma, 6) => 5,
            (Block::GammaGammaGamma, 7) => 6,
            _ => unreachable!("class bounds enforced by constructors"),
        }
    }

    pub fn parse(s: &str) -> Result<GraphId> {
        let bad = || Error::UnknownBlock(s.to_string());
        let (block_part, rest) = s.rsplit_once('-').ok_or_else(bad)?;
        let block = Block::parse(block_part)?;
        let (label, marked) = match rest.strip_suffix('*') {
            Some(head) => (head, true),
            None => (rest, false),
        };
        let mut chars = label.chars();
        let c = chars.next().ok_or_else(bad)?;
        if chars.next().is_some() || !c.is_ascii_lowercase() {
            return Err(bad());
        }
        let class = c as u8 - b'a';
        if class as usize >= block.class_count() {
            return Err(bad());
        }
        if marked && (block, class) != (Block::GammaGammaGamma, 2) {
            return Err(bad());
        }
        Ok(GraphId { block, class, derivative_marked: marked })
    }
}

impl fmt::Debug for GraphId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}-{}{}",
            self.block.name(),
            self.class_label(),
            if self.derivative_marked { "*" } else { "" }
        )
    }
}

impl fmt::Display for GraphId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// All classes of a block in catalog order.
pub fn catalog(block: Block) -> Vec<GraphId> {
    (0..block.class_count() as u8)
        .map(|c| GraphId::new(block, c))
        .collect()
}

/// Catalog as it appears in a derivative-type rank-3 tensor: identical to
/// [`catalog`] except that the doubled-edge-plus-incident-edge class is
/// replaced by its marked refinement.
pub fn derivative_catalog(block: Block) -> Vec<GraphId> {
    catalog(block)
        .into_iter()
        .map(|g| {
            if (g.block, g.class) == (Block::GammaGammaGamma, 2) {
                GraphId::marked(g.block, g.class)
            } else {
                g
            }
        })
        .collect()
}

fn shared_labels(a: InternalIndex, b: InternalIndex) -> u32 {
    a.labels().filter(|&l| b.contains(l)).count() as u32
}

/// Classifies an index tuple into its multigraph class.
///
/// The slot arrangement may be arbitrary (pair and radial slots in any
/// order); the returned id refers to the canonical block. `roles` selects
/// the marked refinement: when exactly one slot has [`SlotRole::Coordinate`]
/// and the tuple lies in the doubled-edge-plus-incident-edge class, the
/// returned id is marked iff that slot holds a copy of the doubled edge.
pub fn classify(slots: &[InternalIndex], roles: &[SlotRole]) -> Result<GraphId> {
    assert_eq!(slots.len(), roles.len(), "one role per slot");
    let kinds: Vec<SlotKind> = slots
        .iter()
        .map(|s| if s.is_radial() { SlotKind::Radial } else { SlotKind::Pair })
        .collect();
    let block = Block::from_slot_kinds(&kinds)?;

    let radials: Vec<InternalIndex> = slots.iter().copied().filter(|s| s.is_radial()).collect();
    let pairs: Vec<InternalIndex> = slots.iter().copied().filter(|s| s.is_pair()).collect();

    let class: u8 = match block {
        Block::R | Block::Gamma => 0,
        Block::Rr => {
            if radials[0] == radials[1] {
                0
            } else {
                1
            }
        }
        Block::GammaR => {
            if shared_labels(pairs[0], radials[0]) == 1 {
                0
            } else {
                1
            }
        }
        Block::GammaGamma => match (pairs[0] == pairs[1], shared_labels(pairs[0], pairs[1])) {
            (true, _) => 0,
            (false, 1) => 1,
            (false, 0) => 2,
            _ => unreachable!("distinct pairs share at most one label"),
        },
        Block::Rrr => {
            let eq01 = radials[0] == radials[1];
            let eq02 = radials[0] == radials[2];
            let eq12 = radials[1] == radials[2];
            if eq01 && eq02 {
                0
            } else if eq01 || eq02 || eq12 {
                1
            } else {
                2
            }
        }
        Block::GammaRr => {
            let e = pairs[0];
            let (k, l) = (radials[0], radials[1]);
            let on_e = |r: InternalIndex| shared_labels(e, r) == 1;
            match (k == l, on_e(k), on_e(l)) {
                (true, true, _) => 0,
                (false, true, true) => 1,
                (false, true, false) | (false, false, true) => 2,
                (true, false, _) => 3,
                (false, false, false) => 4,
            }
        }
        Block::GammaGammaR => {
            let (e1, e2) = (pairs[0], pairs[1]);
            let k = radials[0];
            let k_label = match k {
                InternalIndex::Radial(i) => i,
                InternalIndex::Pair(..) => unreachable!("radial slot"),
            };
            if e1 == e2 {
                if e1.contains(k_label) {
                    0
                } else {
                    1
                }
            } else if shared_labels(e1, e2) == 1 {
                let shared = e1.labels().find(|&l| e2.contains(l)).unwrap();
                if k_label == shared {
                    2
                } else if e1.contains(k_label) || e2.contains(k_label) {
                    3
                } else {
                    4
                }
            } else if e1.contains(k_label) || e2.contains(k_label) {
                5
            } else {
                6
            }
        }
        Block::GammaGammaGamma => classify_three_pairs(&pairs),
    };

    let mut id = GraphId { block, class, derivative_marked: false };
    if (block, class) == (Block::GammaGammaGamma, 2) {
        let coord_slots: Vec<usize> = roles
            .iter()
            .enumerate()
            .filter(|(_, r)| **r == SlotRole::Coordinate)
            .map(|(i, _)| i)
            .collect();
        if let [coord] = coord_slots[..] {
            let doubled = doubled_pair(&pairs);
            id.derivative_marked = slots[coord] == doubled;
        }
    }
    Ok(id)
}

/// The edge appearing twice in a doubled-edge-plus-incident-edge tuple.
fn doubled_pair(pairs: &[InternalIndex]) -> InternalIndex {
    if pairs[0] == pairs[1] || pairs[0] == pairs[2] {
        pairs[0]
    } else {
        pairs[1]
    }
}

fn classify_three_pairs(pairs: &[InternalIndex]) -> u8 {
    let (e1, e2, e3) = (pairs[0], pairs[1], pairs[2]);
    let eq = [e1 == e2, e1 == e3, e2 == e3];
    let num_eq = eq.iter().filter(|b| **b).count();
    match num_eq {
        3 => 0,
        1 => {
            // Doubled edge plus a distinct third; shared vertex or disjoint.
            let (doubled, other) = if eq[0] {
                (e1, e3)
            } else if eq[1] {
                (e1, e2)
            } else {
                (e2, e1)
            };
            if shared_labels(doubled, other) == 1 {
                2
            } else {
                5
            }
        }
        0 => {
            let s12 = shared_labels(e1, e2);
            let s13 = shared_labels(e1, e3);
            let s23 = shared_labels(e2, e3);
            match s12 + s13 + s23 {
                3 => {
                    // Pairwise sharing: common vertex means star, else triangle.
                    let common = e1
                        .labels()
                        .any(|l| e2.contains(l) && e3.contains(l));
                    if common {
                        3
                    } else {
                        1
                    }
                }
                2 => 4,
                1 => 6,
                0 => 7,
                _ => unreachable!("distinct edges share at most one label each"),
            }
        }
        _ => unreachable!("exactly two coincident equalities would force the third"),
    }
}

/// Roles vector matching a graph: the marked refinement distinguishes the
/// first slot, plain classes do not.
pub fn roles_for(id: GraphId) -> Vec<SlotRole> {
    let mut roles = vec![SlotRole::Derivative; id.rank()];
    if id.derivative_marked {
        roles[0] = SlotRole::Coordinate;
    }
    roles
}

/// A class's 0/1 tensor over index tuples at a given N, stored implicitly.
/// Dense realizations never materialize here; callers either test single
/// elements or walk the member list.
#[derive(Clone, Debug)]
pub struct BinaryInvariant {
    id: GraphId,
    n: ParticleCount,
}

impl BinaryInvariant {
    pub fn new(id: GraphId, n: ParticleCount) -> Self {
        BinaryInvariant { id, n }
    }

    pub fn id(&self) -> GraphId {
        self.id
    }

    pub fn n(&self) -> ParticleCount {
        self.n
    }

    /// Tensor element at an index tuple in canonical slot order (for marked
    /// classes the first slot is the distinguished one).
    pub fn element(&self, slots: &[InternalIndex]) -> f64 {
        let id = classify(slots, &roles_for(self.id)).expect("well-formed tuple");
        if id == self.id {
            1.0
        } else {
            0.0
        }
    }

    /// Number of member tuples, from the closed-form counts. Zero when N is
    /// below the class's vertex requirement.
    pub fn count(&self) -> usize {
        let n = self.n.n();
        if (self.n.get()) < self.id.min_vertices() {
            return 0;
        }
        // Falling factorial n(n-1)...(n-k+1).
        let ff = |k: usize| -> usize { (0..k).map(|t| n - t).product() };
        match (self.id.block, self.id.class, self.id.derivative_marked) {
            (Block::R, 0, _) => n,
            (Block::Gamma, 0, _) => ff(2) / 2,
            (Block::Rr, 0, _) => n,
            (Block::Rr, 1, _) => ff(2),
            (Block::GammaR, 0, _) => ff(2),
            (Block::GammaR, 1, _) => ff(3) / 2,
            (Block::GammaGamma, 0, _) => ff(2) / 2,
            (Block::GammaGamma, 1, _) => ff(3),
            (Block::GammaGamma, 2, _) => ff(4) / 4,
            (Block::Rrr, 0, _) => n,
            (Block::Rrr, 1, _) => 3 * ff(2),
            (Block::Rrr, 2, _) => ff(3),
            (Block::GammaRr, 0, _) => ff(2),
            (Block::GammaRr, 1, _) => ff(2),
            (Block::GammaRr, 2, _) => 2 * ff(3),
            (Block::GammaRr, 3, _) => ff(3) / 2,
            (Block::GammaRr, 4, _) => ff(4) / 2,
            (Block::GammaGammaR, 0, _) => ff(2),
            (Block::GammaGammaR, 1, _) => ff(3) / 2,
            (Block::GammaGammaR, 2, _) => ff(3),
            (Block::GammaGammaR, 3, _) => 2 * ff(3),
            (Block::GammaGammaR, 4, _) => ff(4),
            (Block::GammaGammaR, 5, _) => ff(4),
            (Block::GammaGammaR, 6, _) => ff(5) / 4,
            (Block::GammaGammaGamma, 0, _) => ff(2) / 2,
            (Block::GammaGammaGamma, 1, _) => ff(3),
            (Block::GammaGammaGamma, 2, false) => 3 * ff(3),
            (Block::GammaGammaGamma, 2, true) => 2 * ff(3),
            (Block::GammaGammaGamma, 3, _) => ff(4),
            (Block::GammaGammaGamma, 4, _) => 3 * ff(4),
            (Block::GammaGammaGamma, 5, _) => 3 * ff(4) / 4,
            (Block::GammaGammaGamma, 6, _) => 3 * ff(5) / 2,
            (Block::GammaGammaGamma, 7, _) => ff(6) / 8,
            _ => unreachable!("class bounds enforced by constructors"),
        }
    }

    /// All member tuples in canonical slot order. Order is deterministic but
    /// otherwise unspecified.
    pub fn members(&self) -> Vec<Vec<InternalIndex>> {
        let n = self.n;
        let nn = n.get();
        if nn < self.id.min_vertices() {
            return Vec::new();
        }
        let mut out: Vec<Vec<InternalIndex>> = Vec::with_capacity(self.count());
        let labels = || 1..=nn;
        let pairs: Vec<InternalIndex> = pair_indices(n).collect();
        let r = InternalIndex::radial;

        match (self.id.block, self.id.class, self.id.derivative_marked) {
            (Block::R, 0, _) => {
                for i in labels() {
                    out.push(vec![r(i)]);
                }
            }
            (Block::Gamma, 0, _) => {
                for &e in &pairs {
                    out.push(vec![e]);
                }
            }
            (Block::Rr, 0, _) => {
                for i in labels() {
                    out.push(vec![r(i), r(i)]);
                }
            }
            (Block::Rr, 1, _) => {
                for i in labels() {
                    for j in labels() {
                        if i != j {
                            out.push(vec![r(i), r(j)]);
                        }
                    }
                }
            }
            (Block::GammaR, cls, _) => {
                for &e in &pairs {
                    for k in labels() {
                        let on = e.contains(k);
                        if on == (cls == 0) {
                            out.push(vec![e, r(k)]);
                        }
                    }
                }
            }
            (Block::GammaGamma, 0, _) => {
                for &e in &pairs {
                    out.push(vec![e, e]);
                }
            }
            (Block::GammaGamma, cls, _) => {
                for &e1 in &pairs {
                    for &e2 in &pairs {
                        if e1 == e2 {
                            continue;
                        }
                        let share = shared_labels(e1, e2);
                        if (cls == 1 && share == 1) || (cls == 2 && share == 0) {
                            out.push(vec![e1, e2]);
                        }
                    }
                }
            }
            (Block::Rrr, 0, _) => {
                for i in labels() {
                    out.push(vec![r(i), r(i), r(i)]);
                }
            }
            (Block::Rrr, 1, _) => {
                for i in labels() {
                    for j in labels() {
                        if i == j {
                            continue;
                        }
                        out.push(vec![r(i), r(i), r(j)]);
                        out.push(vec![r(i), r(j), r(i)]);
                        out.push(vec![r(j), r(i), r(i)]);
                    }
                }
            }
            (Block::Rrr, 2, _) => {
                for i in labels() {
                    for j in labels() {
                        for k in labels() {
                            if i != j && i != k && j != k {
                                out.push(vec![r(i), r(j), r(k)]);
                            }
                        }
                    }
                }
            }
            (Block::GammaRr, cls, _) => {
                for &e in &pairs {
                    for k in labels() {
                        for l in labels() {
                            let keep = match cls {
                                0 => k == l && e.contains(k),
                                1 => k != l && e.contains(k) && e.contains(l),
                                2 => k != l && (e.contains(k) != e.contains(l)),
                                3 => k == l && !e.contains(k),
                                4 => k != l && !e.contains(k) && !e.contains(l),
                                _ => unreachable!(),
                            };
                            if keep {
                                out.push(vec![e, r(k), r(l)]);
                            }
                        }
                    }
                }
            }
            (Block::GammaGammaR, cls, _) => {
                for &e1 in &pairs {
                    for &e2 in &pairs {
                        for k in labels() {
                            let share = if e1 == e2 { 2 } else { shared_labels(e1, e2) };
                            let on1 = e1.contains(k);
                            let on2 = e2.contains(k);
                            let keep = match cls {
                                0 => share == 2 && on1,
                                1 => share == 2 && !on1,
                                2 => share == 1 && on1 && on2,
                                3 => share == 1 && (on1 != on2),
                                4 => share == 1 && !on1 && !on2,
                                5 => share == 0 && (on1 || on2),
                                6 => share == 0 && !on1 && !on2,
                                _ => unreachable!(),
                            };
                            if keep {
                                out.push(vec![e1, e2, r(k)]);
                            }
                        }
                    }
                }
            }
            (Block::GammaGammaGamma, 0, _) => {
                for &e in &pairs {
                    out.push(vec![e, e, e]);
                }
            }
            (Block::GammaGammaGamma, 2, marked) => {
                // Ordered (doubled edge, incident edge): arrangements keep
                // which edge is doubled, so no double counting.
                for &e in &pairs {
                    for &f in &pairs {
                        if e != f && shared_labels(e, f) == 1 {
                            out.push(vec![e, e, f]);
                            out.push(vec![e, f, e]);
                            if !marked {
                                out.push(vec![f, e, e]);
                            }
                        }
                    }
                }
            }
            (Block::GammaGammaGamma, 5, _) => {
                for &e in &pairs {
                    for &f in &pairs {
                        if e != f && shared_labels(e, f) == 0 {
                            out.push(vec![e, e, f]);
                            out.push(vec![e, f, e]);
                            out.push(vec![f, e, e]);
                        }
                    }
                }
            }
            (Block::GammaGammaGamma, cls, _) => {
                // Classes of three distinct edges: enumerate edge sets once,
                // then emit all six slot arrangements.
                let mut sets: Vec<[InternalIndex; 3]> = Vec::new();
                match cls {
                    1 => {
                        for i in labels() {
                            for j in i + 1..=nn {
                                for k in j + 1..=nn {
                                    sets.push([
                                        InternalIndex::pair(i, j),
                                        InternalIndex::pair(i, k),
                                        InternalIndex::pair(j, k),
                                    ]);
                                }
                            }
                        }
                    }
                    3 => {
                        // Star: center v, unordered leaf triple.
                        for v in labels() {
                            for p in labels() {
                                for q in p + 1..=nn {
                                    for s in q + 1..=nn {
                                        if p == v || q == v || s == v {
                                            continue;
                                        }
                                        sets.push([
                                            InternalIndex::pair(v, p),
                                            InternalIndex::pair(v, q),
                                            InternalIndex::pair(v, s),
                                        ]);
                                    }
                                }
                            }
                        }
                    }
                    4 => {
                        // Path v1-v2-v3-v4; direction fixed by v1 < v4.
                        for v1 in labels() {
                            for v2 in labels() {
                                for v3 in labels() {
                                    for v4 in v1 + 1..=nn {
                                        let vs = [v1, v2, v3, v4];
                                        let distinct = (0..4)
                                            .all(|a| (a + 1..4).all(|b| vs[a] != vs[b]));
                                        if distinct {
                                            sets.push([
                                                InternalIndex::pair(v1, v2),
                                                InternalIndex::pair(v2, v3),
                                                InternalIndex::pair(v3, v4),
                                            ]);
                                        }
                                    }
                                }
                            }
                        }
                    }
                    6 => {
                        // Shared-vertex pair {e1, e2} (listed once) plus a
                        // disjoint edge.
                        for (a, &e1) in pairs.iter().enumerate() {
                            for &e2 in &pairs[a + 1..] {
                                if shared_labels(e1, e2) != 1 {
                                    continue;
                                }
                                for &h in &pairs {
                                    if shared_labels(h, e1) == 0 && shared_labels(h, e2) == 0 {
                                        sets.push([e1, e2, h]);
                                    }
                                }
                            }
                        }
                    }
                    7 => {
                        for (a, &e1) in pairs.iter().enumerate() {
                            for (b, &e2) in pairs.iter().enumerate().skip(a + 1) {
                                if shared_labels(e1, e2) != 0 {
                                    continue;
                                }
                                for &e3 in &pairs[b + 1..] {
                                    if shared_labels(e3, e1) == 0 && shared_labels(e3, e2) == 0 {
                                        sets.push([e1, e2, e3]);
                                    }
                                }
                            }
                        }
                    }
                    _ => unreachable!(),
                }
                const ARRANGEMENTS: [[usize; 3]; 6] =
                    [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
                for set in sets {
                    for arr in ARRANGEMENTS {
                        out.push(vec![set[arr[0]], set[arr[1]], set[arr[2]]]);
                    }
                }
            }
            _ => unreachable!("class bounds enforced by constructors"),
        }
        out
    }

    /// Member tuples as flat offsets, for contraction loops.
    pub fn member_offsets(&self) -> Vec<Vec<usize>> {
        self.members()
            .into_iter()
            .map(|tuple| {
                tuple
                    .into_iter()
                    .map(|idx| idx.flat_index(self.n).expect("member in range"))
                    .collect()
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coordinates::all_indices;

    fn pc(n: u32) -> ParticleCount {
        ParticleCount::new(n).unwrap()
    }

    #[test]
    fn catalog_sizes() {
        struct Case {
            block: Block,
            classes: usize,
        }
        let cases = [
            Case { block: Block::Rr, classes: 2 },
            Case { block: Block::GammaR, classes: 2 },
            Case { block: Block::GammaGamma, classes: 3 },
            Case { block: Block::R, classes: 1 },
            Case { block: Block::Gamma, classes: 1 },
            Case { block: Block::Rrr, classes: 3 },
            Case { block: Block::GammaRr, classes: 5 },
            Case { block: Block::GammaGammaR, classes: 7 },
            Case { block: Block::GammaGammaGamma, classes: 8 },
        ];
        let mut rank3_total = 0;
        for case in cases {
            assert_eq!(catalog(case.block).len(), case.classes, "{}", case.block);
            if case.block.rank() == 3 || case.block.rank() == 1 {
                rank3_total += case.classes;
            }
        }
        assert_eq!(rank3_total, 25);
    }

    #[test]
    fn graph_id_parse_roundtrip() {
        for block in Block::ALL {
            for id in catalog(block) {
                assert_eq!(GraphId::parse(&id.to_string()).unwrap(), id);
            }
        }
        let tic = GraphId::marked(Block::GammaGammaGamma, 2);
        assert_eq!(GraphId::parse("ggg-c*").unwrap(), tic);
        assert!(GraphId::parse("ggg-z").is_err());
        assert!(GraphId::parse("gg-a*").is_err());
    }

    /// Every index tuple of a block belongs to exactly one catalog class, so
    /// the catalog invariants sum to the all-ones tensor.
    fn check_partition(block: Block, n: ParticleCount) {
        let kinds = block.slot_kinds();
        let slots_by_kind: Vec<Vec<InternalIndex>> = kinds
            .iter()
            .map(|k| {
                all_indices(n)
                    .filter(|idx| idx.is_pair() == (*k == SlotKind::Pair))
                    .collect()
            })
            .collect();
        let invariants: Vec<BinaryInvariant> = catalog(block)
            .into_iter()
            .map(|id| BinaryInvariant::new(id, n))
            .collect();
        let mut tallies = vec![0usize; invariants.len()];

        let mut tuple = vec![slots_by_kind[0][0]; kinds.len()];
        let mut idxs = vec![0usize; kinds.len()];
        loop {
            for (s, &i) in idxs.iter().enumerate() {
                tuple[s] = slots_by_kind[s][i];
            }
            let hits: Vec<usize> = invariants
                .iter()
                .enumerate()
                .filter(|(_, b)| b.element(&tuple) == 1.0)
                .map(|(i, _)| i)
                .collect();
            assert_eq!(hits.len(), 1, "tuple {tuple:?} matched {hits:?}");
            tallies[hits[0]] += 1;

            let mut s = kinds.len();
            loop {
                if s == 0 {
                    for (inv, tally) in invariants.iter().zip(&tallies) {
                        assert_eq!(inv.count(), *tally, "count mismatch for {}", inv.id());
                    }
                    return;
                }
                s -= 1;
                idxs[s] += 1;
                if idxs[s] < slots_by_kind[s].len() {
                    break;
                }
                idxs[s] = 0;
            }
        }
    }

    #[test]
    fn classification_partitions_every_block() {
        for n in [4u32, 5, 6] {
            for block in Block::ALL {
                check_partition(block, pc(n));
            }
        }
    }

    #[test]
    fn members_agree_with_classify_and_counts() {
        for n in [4u32, 5, 6, 7] {
            let n = pc(n);
            for block in Block::ALL {
                let mut ids = catalog(block);
                if block == Block::GammaGammaGamma {
                    ids.push(GraphId::marked(block, 2));
                }
                for id in ids {
                    let inv = BinaryInvariant::new(id, n);
                    let members = inv.members();
                    assert_eq!(members.len(), inv.count(), "{id}");
                    let mut seen = std::collections::BTreeSet::new();
                    for m in &members {
                        assert_eq!(classify(m, &roles_for(id)).unwrap(), id, "{id} {m:?}");
                        assert!(seen.insert(m.clone()), "duplicate member {m:?} of {id}");
                    }
                }
            }
        }
    }

    #[test]
    fn marked_refinement_splits_the_class() {
        let n = pc(5);
        let plain = BinaryInvariant::new(GraphId::new(Block::GammaGammaGamma, 2), n);
        let marked = BinaryInvariant::new(GraphId::marked(Block::GammaGammaGamma, 2), n);
        assert_eq!(marked.count() * 3, plain.count() * 2);
        for m in marked.members() {
            assert_eq!(plain.element(&m), 1.0);
        }
        // Complement: plain members whose first slot is the single edge.
        let unmarked: Vec<_> = plain
            .members()
            .into_iter()
            .filter(|m| marked.element(m) == 0.0)
            .collect();
        assert_eq!(unmarked.len() + marked.count(), plain.count());
    }

    #[test]
    fn classify_is_arrangement_independent() {
        let e = InternalIndex::pair(1, 2);
        let f = InternalIndex::pair(2, 3);
        let k = InternalIndex::radial(1);
        let roles2 = [SlotRole::Derivative; 2];
        let a = classify(&[e, k], &roles2).unwrap();
        let b = classify(&[k, e], &roles2).unwrap();
        assert_eq!(a, b);
        let roles3 = [SlotRole::Derivative; 3];
        let c = classify(&[e, f, k], &roles3).unwrap();
        let d = classify(&[k, f, e], &roles3).unwrap();
        assert_eq!(c, d);
        assert_eq!(c, GraphId::new(Block::GammaGammaR, 3));
    }

    #[test]
    fn marking_requires_unique_coordinate_slot() {
        let e = InternalIndex::pair(1, 2);
        let f = InternalIndex::pair(2, 3);
        use SlotRole::{Coordinate as C, Derivative as D};
        let marked = classify(&[e, e, f], &[C, D, D]).unwrap();
        assert!(marked.derivative_marked);
        let unmarked = classify(&[f, e, e], &[C, D, D]).unwrap();
        assert!(!unmarked.derivative_marked);
        let plain = classify(&[e, e, f], &[C, C, C]).unwrap();
        assert!(!plain.derivative_marked);
        let also_plain = classify(&[e, e, f], &[D, D, D]).unwrap();
        assert!(!also_plain.derivative_marked);
    }
}
