//! Movement conflict relation and phase enumeration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relation between two movements (or, lifted, between two phases).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ConflictClass {
    NonConflicting = 0,
    Partial = 1,
    Conflicting = 2,
}

impl ConflictClass {
    pub const ALL: [ConflictClass; 3] = [
        ConflictClass::NonConflicting,
        ConflictClass::Partial,
        ConflictClass::Conflicting,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Symmetric movement conflict relation with a separate partial-conflict relation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConflictMatrix {
    size: usize,
    conflicts: Vec<bool>,
    partial: Vec<bool>,
}

impl ConflictMatrix {
    /// Matrix with no conflicting pairs.
    pub fn empty(size: usize) -> Self {
        ConflictMatrix {
            size,
            conflicts: vec![false; size * size],
            partial: vec![false; size * size],
        }
    }

    /// Symmetrizes a raw relation with OR: a pair conflicts if either direction says so.
    /// The diagonal is cleared.
    pub fn symmetrize(raw: &[Vec<bool>]) -> Result<Self> {
        let mut cm = ConflictMatrix::empty(raw.len());
        check_square(raw)?;
        for i in 0..cm.size {
            for j in 0..cm.size {
                if i != j && (raw[i][j] || raw[j][i]) {
                    cm.conflicts[i * cm.size + j] = true;
                }
            }
        }
        Ok(cm)
    }

    /// Builds from a raw matrix of classes, symmetrizing both relations. A pair that is
    /// conflicting in either direction is conflicting; otherwise partial in either
    /// direction makes it partial.
    pub fn from_classes(raw: &[Vec<ConflictClass>]) -> Result<Self> {
        check_square(raw)?;
        let n = raw.len();
        let hard: Vec<Vec<bool>> = raw
            .iter()
            .map(|row| row.iter().map(|c| *c == ConflictClass::Conflicting).collect())
            .collect();
        let mut cm = ConflictMatrix::symmetrize(&hard)?;
        for i in 0..n {
            for j in 0..n {
                let soft = raw[i][j] == ConflictClass::Partial || raw[j][i] == ConflictClass::Partial;
                if i != j && soft && !cm.conflicts[i * n + j] {
                    cm.partial[i * n + j] = true;
                }
            }
        }
        Ok(cm)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn conflicts(&self, i: usize, j: usize) -> bool {
        self.conflicts[i * self.size + j]
    }

    pub fn partial(&self, i: usize, j: usize) -> bool {
        self.partial[i * self.size + j]
    }

    pub fn class(&self, i: usize, j: usize) -> ConflictClass {
        if self.conflicts(i, j) {
            ConflictClass::Conflicting
        } else if self.partial(i, j) {
            ConflictClass::Partial
        } else {
            ConflictClass::NonConflicting
        }
    }

    /// Conflict relation as nested rows.
    pub fn conflict_rows(&self) -> Vec<Vec<bool>> {
        self.conflicts.chunks(self.size.max(1)).map(<[bool]>::to_vec).collect()
    }

    /// Strongest class over all cross pairs of two movement sets. Shared movements
    /// contribute nothing.
    pub fn dominant_class(&self, a: &[usize], b: &[usize]) -> ConflictClass {
        let mut best = ConflictClass::NonConflicting;
        for &i in a {
            for &j in b {
                if i != j {
                    best = best.max(self.class(i, j));
                }
            }
        }
        best
    }
}

fn check_square<T>(raw: &[Vec<T>]) -> Result<()> {
    for (row, r) in raw.iter().enumerate() {
        if r.len() != raw.len() {
            return Err(Error::NonSquare {
                row,
                len: r.len(),
                expected: raw.len(),
            });
        }
    }
    Ok(())
}

/// A set of movements that may be green together. Movement indices are sorted.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Phase {
    pub id: usize,
    pub movements: Vec<usize>,
}

impl Phase {
    pub fn contains(&self, movement: usize) -> bool {
        self.movements.binary_search(&movement).is_ok()
    }
}

/// Every maximal set of pairwise non-conflicting movements, ordered lexicographically by
/// sorted movement indices and numbered from 0.
pub fn enumerate_phases(cm: &ConflictMatrix) -> Vec<Phase> {
    enumerate_phases_excluding(cm, &vec![false; cm.size()])
}

/// As [`enumerate_phases`], ignoring movements flagged in `excluded` (always-green turns).
pub fn enumerate_phases_excluding(cm: &ConflictMatrix, excluded: &[bool]) -> Vec<Phase> {
    let candidates: Vec<usize> = (0..cm.size()).filter(|&m| !excluded[m]).collect();
    let mut cliques = Vec::new();
    bron_kerbosch(cm, &mut Vec::new(), candidates, Vec::new(), &mut cliques);
    for c in &mut cliques {
        c.sort_unstable();
    }
    cliques.sort();
    cliques
        .into_iter()
        .enumerate()
        .map(|(id, movements)| Phase { id, movements })
        .collect()
}

// Maximal cliques of the compatibility graph (edges between non-conflicting movements).
fn bron_kerbosch(
    cm: &ConflictMatrix,
    current: &mut Vec<usize>,
    mut candidates: Vec<usize>,
    mut excluded: Vec<usize>,
    out: &mut Vec<Vec<usize>>,
) {
    if candidates.is_empty() {
        if excluded.is_empty() {
            out.push(current.clone());
        }
        return;
    }
    let compatible = |a: usize, b: usize| a != b && !cm.conflicts(a, b);
    let pivot = candidates
        .iter()
        .chain(excluded.iter())
        .copied()
        .max_by_key(|&u| candidates.iter().filter(|&&v| compatible(u, v)).count())
        .unwrap_or(candidates[0]);
    let branch: Vec<usize> = candidates
        .iter()
        .copied()
        .filter(|&v| !compatible(pivot, v))
        .collect();
    for v in branch {
        current.push(v);
        let next_c = candidates.iter().copied().filter(|&u| compatible(v, u)).collect();
        let next_x = excluded.iter().copied().filter(|&u| compatible(v, u)).collect();
        bron_kerbosch(cm, current, next_c, next_x, out);
        current.pop();
        candidates.retain(|&u| u != v);
        excluded.push(v);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Movement conflict matrix as printed (1-based rows, `C` = conflict), including the
    /// asymmetric cell at row 3 / column 6.
    pub(crate) fn printed_matrix() -> Vec<Vec<bool>> {
        let rows = [
            "-CCC--CC", "C-CC--CC", "CC-CC---", "CCC-CC--", "--CC-CCC", "--CCC-CC", "CC--CC-C",
            "CC--CCC-",
        ];
        rows.iter()
            .map(|r| r.chars().map(|c| c == 'C').collect())
            .collect()
    }

    // Exhaustive scan: every subset that is pairwise compatible and cannot be extended.
    fn brute_force_phases(cm: &ConflictMatrix) -> Vec<Vec<usize>> {
        let n = cm.size();
        let ok = |s: u32| {
            (0..n).all(|i| {
                (0..n).all(|j| s & (1 << i) == 0 || s & (1 << j) == 0 || !cm.conflicts(i, j))
            })
        };
        let mut out = Vec::new();
        for s in 1u32..(1 << n) {
            if ok(s) && (0..n).all(|k| s & (1 << k) != 0 || !ok(s | (1 << k))) {
                out.push((0..n).filter(|&i| s & (1 << i) != 0).collect::<Vec<_>>());
            }
        }
        out.sort();
        out
    }

    #[test]
    fn printed_matrix_has_one_asymmetric_cell() {
        let raw = printed_matrix();
        let asym: Vec<(usize, usize)> = (0..8)
            .flat_map(|i| (0..8).map(move |j| (i, j)))
            .filter(|&(i, j)| i < j && raw[i][j] != raw[j][i])
            .collect();
        assert_eq!(asym, vec![(2, 5)]);
    }

    #[test]
    fn symmetrize_printed_matrix() {
        let cm = ConflictMatrix::symmetrize(&printed_matrix()).unwrap();
        assert!(cm.conflicts(0, 1) && cm.conflicts(1, 0));
        assert!(!cm.conflicts(0, 4) && !cm.conflicts(4, 0));
        assert!(cm.conflicts(2, 5) && cm.conflicts(5, 2));
    }

    #[test]
    fn symmetrize_or_rule() {
        let mut raw = vec![vec![false; 8]; 8];
        raw[5][2] = true;
        let cm = ConflictMatrix::symmetrize(&raw).unwrap();
        assert!(cm.conflicts(2, 5) && cm.conflicts(5, 2));
    }

    #[test]
    fn symmetrize_rejects_non_square() {
        let raw = vec![vec![false, true], vec![false]];
        assert!(matches!(
            ConflictMatrix::symmetrize(&raw),
            Err(Error::NonSquare { row: 1, .. })
        ));
    }

    #[test]
    fn eight_two_movement_phases() {
        let cm = ConflictMatrix::symmetrize(&printed_matrix()).unwrap();
        let phases = enumerate_phases(&cm);
        let oracle = brute_force_phases(&cm);
        let got: Vec<Vec<usize>> = phases.iter().map(|p| p.movements.clone()).collect();
        assert_eq!(got, oracle);
        // 1-based: {1,5},{1,6},{2,5},{2,6},{3,7},{3,8},{4,7},{4,8}
        let expected = vec![
            vec![0, 4],
            vec![0, 5],
            vec![1, 4],
            vec![1, 5],
            vec![2, 6],
            vec![2, 7],
            vec![3, 6],
            vec![3, 7],
        ];
        assert_eq!(got, expected);
        assert!(phases.iter().enumerate().all(|(i, p)| p.id == i));
    }

    #[test]
    fn all_conflicting_gives_singletons() {
        let raw = vec![vec![false, true, true], vec![true, false, true], vec![true, true, false]];
        let phases = enumerate_phases(&ConflictMatrix::symmetrize(&raw).unwrap());
        let got: Vec<Vec<usize>> = phases.into_iter().map(|p| p.movements).collect();
        assert_eq!(got, vec![vec![0], vec![1], vec![2]]);
    }

    #[test]
    fn no_conflicts_gives_single_phase() {
        let phases = enumerate_phases(&ConflictMatrix::empty(2));
        assert_eq!(phases.len(), 1);
        assert_eq!(phases[0].movements, vec![0, 1]);
    }

    #[test]
    fn excluded_movements_never_appear() {
        let phases = enumerate_phases_excluding(&ConflictMatrix::empty(3), &[false, true, false]);
        assert_eq!(phases.len(), 1);
        assert_eq!(phases[0].movements, vec![0, 2]);
    }

    #[test]
    fn partial_pairs_are_disjoint_and_do_not_block_phases() {
        use ConflictClass::*;
        let raw = vec![
            vec![NonConflicting, Partial, Conflicting],
            vec![NonConflicting, NonConflicting, NonConflicting],
            vec![Partial, NonConflicting, NonConflicting],
        ];
        let cm = ConflictMatrix::from_classes(&raw).unwrap();
        assert!(cm.partial(0, 1) && cm.partial(1, 0));
        assert!(cm.conflicts(0, 2) && !cm.partial(0, 2));
        let got: Vec<Vec<usize>> = enumerate_phases(&cm).into_iter().map(|p| p.movements).collect();
        assert_eq!(got, vec![vec![0, 1], vec![1, 2]]);
    }

    fn arb_raw(max: usize) -> impl Strategy<Value = Vec<Vec<bool>>> {
        (1..=max).prop_flat_map(|n| {
            proptest::collection::vec(proptest::collection::vec(any::<bool>(), n), n).prop_map(
                |mut m| {
                    for (i, row) in m.iter_mut().enumerate() {
                        row[i] = false;
                    }
                    m
                },
            )
        })
    }

    proptest! {
        #[test]
        fn phases_sound_maximal_and_match_brute_force(raw in arb_raw(9)) {
            let cm = ConflictMatrix::symmetrize(&raw).unwrap();
            let phases = enumerate_phases(&cm);
            for p in &phases {
                for &a in &p.movements {
                    for &b in &p.movements {
                        prop_assert!(!cm.conflicts(a, b));
                    }
                }
                for m in (0..cm.size()).filter(|m| !p.contains(*m)) {
                    prop_assert!(p.movements.iter().any(|&a| cm.conflicts(a, m)));
                }
            }
            let got: Vec<Vec<usize>> = phases.iter().map(|p| p.movements.clone()).collect();
            prop_assert_eq!(got, brute_force_phases(&cm));
            prop_assert_eq!(enumerate_phases(&cm), phases);
        }

        #[test]
        fn symmetrize_is_idempotent(raw in arb_raw(10)) {
            let once = ConflictMatrix::symmetrize(&raw).unwrap();
            let twice = ConflictMatrix::symmetrize(&once.conflict_rows()).unwrap();
            prop_assert_eq!(once, twice);
        }
    }
}
