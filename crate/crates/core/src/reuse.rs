//! Correlated-randomness accounting for the one-round polynomial merge.
//!
//! Given an exponent matrix, this module computes how many subset-product
//! shares the offline phase must prepare under three regimes: the naive
//! per-row expansion, the Boolean exponent collapse, and cross-row reuse
//! via inclusion-exclusion. `build_reuse_plan` emits the deduplicated
//! subset list together with every row's monomial splits, and
//! `brute_force_count` is the independent enumeration oracle the counting
//! formulas are validated against.

use std::collections::HashMap;

use serde::Serialize;

use crate::error::{Error, Result};

/// An `m x n` matrix of non-negative exponents, one row per polynomial.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExponentMatrix {
    rows: Vec<Vec<u32>>,
    cols: usize,
}

impl ExponentMatrix {
    pub fn new(rows: Vec<Vec<u32>>) -> Result<ExponentMatrix> {
        if rows.is_empty() {
            return Err(Error::Config("matrix needs at least one row".into()));
        }
        let cols = rows[0].len();
        if cols == 0 {
            return Err(Error::Config("matrix needs at least one column".into()));
        }
        if cols > 64 {
            return Err(Error::TooManyColumns(cols));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(Error::RaggedMatrix {
                    row: i,
                    got: row.len(),
                    expected: cols,
                });
            }
            if row.iter().all(|&e| e == 0) {
                return Err(Error::EmptyRow(i));
            }
        }
        Ok(ExponentMatrix { rows, cols })
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn num_cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[u32] {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[Vec<u32>] {
        &self.rows
    }

    /// Active index sets as bitmasks: bit `j` set iff `E[i][j] > 0`.
    pub fn active_sets(&self) -> Vec<u64> {
        self.rows
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .filter(|(_, &e)| e > 0)
                    .fold(0u64, |m, (j, _)| m | (1u64 << j))
            })
            .collect()
    }
}

/// Parses the text grid format: rows on separate lines, entries separated
/// by spaces. Blank lines are ignored.
pub fn parse_matrix(text: &str) -> Result<ExponentMatrix> {
    let mut rows = Vec::new();
    for (line_idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut row = Vec::new();
        let mut column = 0usize;
        let mut chars = line.char_indices().peekable();
        while let Some(&(start, c)) = chars.peek() {
            if c.is_whitespace() {
                chars.next();
                continue;
            }
            column = start + 1;
            let mut token = String::new();
            while let Some(&(_, c)) = chars.peek() {
                if c.is_whitespace() {
                    break;
                }
                token.push(c);
                chars.next();
            }
            let value: u32 = token.parse().map_err(|_| Error::MatrixParse {
                line: line_idx + 1,
                column,
                message: format!("invalid entry {token:?}"),
            })?;
            row.push(value);
        }
        if row.is_empty() {
            continue;
        }
        rows.push((line_idx + 1, column, row));
    }
    if rows.is_empty() {
        return Err(Error::MatrixParse {
            line: 1,
            column: 1,
            message: "no matrix rows found".into(),
        });
    }
    let expected = rows[0].2.len();
    for (line, column, row) in &rows {
        if row.len() != expected {
            return Err(Error::MatrixParse {
                line: *line,
                column: *column,
                message: format!("row has {} entries, expected {}", row.len(), expected),
            });
        }
    }
    ExponentMatrix::new(rows.into_iter().map(|(_, _, r)| r).collect()).map_err(|e| match e {
        Error::EmptyRow(i) => Error::MatrixParse {
            line: i + 1,
            column: 1,
            message: "row has no positive entry".into(),
        },
        other => other,
    })
}

/// Naive expansion count: one randomness slot per nonempty subset of each
/// row's exponent-sum many factor slots.
pub fn n_naive(matrix: &ExponentMatrix) -> Result<u128> {
    let mut total = 0u128;
    for (i, row) in matrix.rows().iter().enumerate() {
        let sum: u32 = row.iter().sum();
        if sum > 62 {
            return Err(Error::ExponentOverflow {
                row: i,
                sum,
                limit: 62,
            });
        }
        total += (1u128 << sum) - 1;
    }
    Ok(total)
}

/// Count after the Boolean exponent collapse: per row, nonempty subsets of
/// the active index set.
pub fn n_opt(matrix: &ExponentMatrix) -> u128 {
    matrix
        .active_sets()
        .iter()
        .map(|a| (1u128 << a.count_ones()) - 1)
        .sum()
}

/// Per-row and total randomness counts after cross-row reuse.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RowCounts {
    pub per_row: Vec<u128>,
    pub total: u128,
}

/// Inclusion-exclusion count of new subsets introduced by each row: row `i`
/// contributes every nonempty subset of its active set not already covered
/// by an earlier row. The empty prior-subset term contributes the row's
/// own `2^|A_i| - 1`.
pub fn n_final(matrix: &ExponentMatrix) -> Result<RowCounts> {
    let m = matrix.num_rows();
    if m > 24 {
        return Err(Error::TooManyRows(m));
    }
    let active = matrix.active_sets();
    let mut per_row = Vec::with_capacity(m);
    let mut total = 0u128;
    for i in 0..m {
        let mut count = 0i128;
        // All subsets T of the prior rows {0..i-1}, signed by |T|.
        for t in 0..(1u64 << i) {
            let mut inter = active[i];
            let mut bits = t;
            while bits != 0 {
                let r = bits.trailing_zeros() as usize;
                inter &= active[r];
                bits &= bits - 1;
            }
            let term = (1i128 << inter.count_ones()) - 1;
            if t.count_ones() % 2 == 0 {
                count += term;
            } else {
                count -= term;
            }
        }
        debug_assert!(count >= 0, "inclusion-exclusion went negative");
        per_row.push(count as u128);
        total += count as u128;
    }
    Ok(RowCounts { per_row, total })
}

/// Oracle: explicit enumeration of all distinct nonempty subsets covered by
/// at least one row's active set.
pub fn brute_force_count(matrix: &ExponentMatrix) -> Result<u128> {
    if matrix.num_cols() > 20 {
        return Err(Error::BruteForceTooWide(matrix.num_cols()));
    }
    let mut seen = std::collections::HashSet::new();
    for a in matrix.active_sets() {
        let mut sub = a;
        loop {
            if sub != 0 {
                seen.insert(sub);
            }
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & a;
        }
    }
    Ok(seen.len() as u128)
}

/// One additive term in a row's masked expansion: the public product over
/// `opened` and, unless this is the all-opened term, the party's share of
/// the subset product at `rand`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RowTerm {
    pub opened: u64,
    pub rand: Option<usize>,
}

/// Deduplicated subset-product requirements plus each row's full list of
/// monomial splits into (opened, randomness) parts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReusePlan {
    num_vars: usize,
    subsets: Vec<u64>,
    index: HashMap<u64, usize>,
    row_terms: Vec<Vec<RowTerm>>,
    fingerprint: u64,
}

impl ReusePlan {
    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    /// Order-sensitive digest of the subset list; share bundles carry it
    /// so positional lookups cannot silently cross plans.
    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    /// Plan position of the singleton subset `{v}`, if variable `v` is
    /// active in any row.
    pub fn singleton_index(&self, v: usize) -> Option<usize> {
        self.subset_index(1u64 << v)
    }

    /// Subsets in plan order (sorted by size, then lexicographically on the
    /// ascending index list).
    pub fn subsets(&self) -> &[u64] {
        &self.subsets
    }

    pub fn len(&self) -> usize {
        self.subsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subsets.is_empty()
    }

    pub fn subset_index(&self, mask: u64) -> Option<usize> {
        self.index.get(&mask).copied()
    }

    pub fn row_terms(&self, row: usize) -> &[RowTerm] {
        &self.row_terms[row]
    }

    pub fn num_rows(&self) -> usize {
        self.row_terms.len()
    }

    /// JSON view: subsets as index arrays plus per-row monomial mappings.
    pub fn to_json_value(&self) -> serde_json::Value {
        let subsets: Vec<Vec<usize>> = self.subsets.iter().map(|&m| mask_to_indices(m)).collect();
        let rows: Vec<Vec<serde_json::Value>> = self
            .row_terms
            .iter()
            .map(|terms| {
                terms
                    .iter()
                    .map(|t| {
                        serde_json::json!({
                            "opened": mask_to_indices(t.opened),
                            "rand_subset": t.rand,
                        })
                    })
                    .collect()
            })
            .collect();
        serde_json::json!({
            "num_vars": self.num_vars,
            "subsets": subsets,
            "rows": rows,
        })
    }
}

pub fn mask_to_indices(mask: u64) -> Vec<usize> {
    let mut out = Vec::with_capacity(mask.count_ones() as usize);
    let mut bits = mask;
    while bits != 0 {
        out.push(bits.trailing_zeros() as usize);
        bits &= bits - 1;
    }
    out
}

/// Order-sensitive FNV-1a digest of a subset list.
pub fn subsets_fingerprint(num_vars: usize, subsets: &[u64]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    let mut mix = |v: u64| {
        for byte in v.to_le_bytes() {
            h ^= byte as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
    };
    mix(num_vars as u64);
    for &s in subsets {
        mix(s);
    }
    h
}

/// Builds the deduplicated subset plan for a matrix under the Boolean
/// interpretation. Plan size equals `brute_force_count`.
pub fn build_reuse_plan(matrix: &ExponentMatrix) -> Result<ReusePlan> {
    let active = matrix.active_sets();
    let mut seen = std::collections::HashSet::new();
    for &a in &active {
        let mut sub = a;
        loop {
            if sub != 0 {
                seen.insert(sub);
            }
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & a;
        }
    }
    let mut subsets: Vec<u64> = seen.into_iter().collect();
    subsets.sort_by(|&a, &b| {
        a.count_ones()
            .cmp(&b.count_ones())
            .then_with(|| mask_to_indices(a).cmp(&mask_to_indices(b)))
    });
    let index: HashMap<u64, usize> = subsets.iter().enumerate().map(|(i, &m)| (m, i)).collect();

    let mut row_terms = Vec::with_capacity(active.len());
    for &a in &active {
        let mut terms = Vec::with_capacity(1usize << a.count_ones());
        let mut sub = a;
        loop {
            // `sub` is the randomness part; the rest of the row is opened.
            let term = if sub == 0 {
                RowTerm {
                    opened: a,
                    rand: None,
                }
            } else {
                RowTerm {
                    opened: a & !sub,
                    rand: Some(index[&sub]),
                }
            };
            terms.push(term);
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & a;
        }
        row_terms.push(terms);
    }

    let fingerprint = subsets_fingerprint(matrix.num_cols(), &subsets);
    Ok(ReusePlan {
        num_vars: matrix.num_cols(),
        subsets,
        index,
        row_terms,
        fingerprint,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn m(rows: &[&[u32]]) -> ExponentMatrix {
        ExponentMatrix::new(rows.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    #[test]
    fn naive_examples() {
        assert_eq!(n_naive(&m(&[&[1, 1, 1]])).unwrap(), 7);
        assert_eq!(n_naive(&m(&[&[2, 0, 1]])).unwrap(), 7);
    }

    #[test]
    fn naive_matches_slot_enumeration() {
        // Independent oracle: nonempty subsets of the row's expanded factor
        // slots (each exponent unit is its own slot).
        let mut rng = rand::rngs::StdRng::seed_from_u64(3);
        for _ in 0..50 {
            let rows = rng.gen_range(1..=6);
            let cols = rng.gen_range(1..=6);
            let mut data = Vec::new();
            for _ in 0..rows {
                loop {
                    let row: Vec<u32> = (0..cols).map(|_| rng.gen_range(0..=2)).collect();
                    if row.iter().any(|&e| e > 0) {
                        data.push(row);
                        break;
                    }
                }
            }
            let matrix = ExponentMatrix::new(data).unwrap();
            let expected: u128 = matrix
                .rows()
                .iter()
                .map(|row| {
                    let slots: u32 = row.iter().sum();
                    (1u128 << slots) - 1
                })
                .sum();
            assert_eq!(n_naive(&matrix).unwrap(), expected);
        }
    }

    #[test]
    fn naive_overflow_guard() {
        let matrix = m(&[&[63]]);
        assert!(matches!(
            n_naive(&matrix),
            Err(Error::ExponentOverflow { sum: 63, .. })
        ));
    }

    #[test]
    fn opt_examples() {
        assert_eq!(n_opt(&m(&[&[2, 0, 1]])), 3);
        assert_eq!(n_opt(&m(&[&[1, 1, 1]])), 7);
    }

    #[test]
    fn opt_matches_per_row_enumeration() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(4);
        for _ in 0..50 {
            let rows = rng.gen_range(1..=6);
            let cols = rng.gen_range(1..=8);
            let mut data = Vec::new();
            for _ in 0..rows {
                loop {
                    let row: Vec<u32> = (0..cols).map(|_| rng.gen_range(0..=3)).collect();
                    if row.iter().any(|&e| e > 0) {
                        data.push(row);
                        break;
                    }
                }
            }
            let matrix = ExponentMatrix::new(data).unwrap();
            let expected: u128 = matrix
                .active_sets()
                .iter()
                .map(|&a| {
                    // Enumerate distinct nonempty subsets of this row only.
                    let mut count = 0u128;
                    let mut sub = a;
                    loop {
                        if sub != 0 {
                            count += 1;
                        }
                        if sub == 0 {
                            break;
                        }
                        sub = (sub - 1) & a;
                    }
                    count
                })
                .sum();
            assert_eq!(n_opt(&matrix), expected);
        }
    }

    #[test]
    fn final_single_row_equals_opt() {
        let matrix = m(&[&[1, 0, 1, 1]]);
        let counts = n_final(&matrix).unwrap();
        assert_eq!(counts.per_row, vec![7]);
        assert_eq!(counts.total, n_opt(&matrix));
    }

    #[test]
    fn final_identical_rows_reuse_everything() {
        let matrix = m(&[&[1, 1, 0], &[2, 1, 0]]);
        let counts = n_final(&matrix).unwrap();
        assert_eq!(counts.per_row, vec![3, 0]);
        assert_eq!(counts.total, 3);
    }

    #[test]
    fn final_matches_brute_force_on_random_matrices() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(5);
        for _ in 0..200 {
            let rows = rng.gen_range(1..=8);
            let cols = rng.gen_range(1..=10);
            let mut data = Vec::new();
            for _ in 0..rows {
                loop {
                    let row: Vec<u32> = (0..cols)
                        .map(|_| if rng.gen_bool(0.5) { rng.gen_range(1..=2) } else { 0 })
                        .collect();
                    if row.iter().any(|&e| e > 0) {
                        data.push(row);
                        break;
                    }
                }
            }
            let matrix = ExponentMatrix::new(data).unwrap();
            assert_eq!(
                n_final(&matrix).unwrap().total,
                brute_force_count(&matrix).unwrap()
            );
        }
    }

    #[test]
    fn plan_covers_rows_and_matches_brute_force() {
        let matrix = m(&[&[1, 1, 0, 0], &[0, 1, 1, 0], &[1, 0, 1, 1]]);
        let plan = build_reuse_plan(&matrix).unwrap();
        assert_eq!(plan.len() as u128, brute_force_count(&matrix).unwrap());
        // Every row's expansion covers all splits of its active set.
        for (i, &a) in matrix.active_sets().iter().enumerate() {
            let terms = plan.row_terms(i);
            assert_eq!(terms.len(), 1usize << a.count_ones());
            for t in terms {
                match t.rand {
                    Some(idx) => {
                        assert_eq!(t.opened | plan.subsets()[idx], a);
                        assert_eq!(t.opened & plan.subsets()[idx], 0);
                    }
                    None => assert_eq!(t.opened, a),
                }
            }
        }
    }

    #[test]
    fn plan_disjoint_rows() {
        let matrix = m(&[&[1, 1, 0, 0], &[0, 0, 1, 1]]);
        let plan = build_reuse_plan(&matrix).unwrap();
        assert_eq!(plan.len(), 6);
    }

    #[test]
    fn plan_nested_rows_absorbed() {
        let matrix = m(&[&[1, 1, 0], &[1, 1, 1]]);
        let plan = build_reuse_plan(&matrix).unwrap();
        assert_eq!(plan.len(), 7);
    }

    #[test]
    fn plan_is_deterministic() {
        let matrix = m(&[&[1, 1, 0], &[0, 1, 1]]);
        let a = build_reuse_plan(&matrix).unwrap();
        let b = build_reuse_plan(&matrix).unwrap();
        assert_eq!(a, b);
        assert_eq!(
            serde_json::to_string(&a.to_json_value()).unwrap(),
            serde_json::to_string(&b.to_json_value()).unwrap()
        );
    }

    #[test]
    fn subset_order_is_size_then_lex() {
        let matrix = m(&[&[1, 1, 1]]);
        let plan = build_reuse_plan(&matrix).unwrap();
        let as_indices: Vec<Vec<usize>> =
            plan.subsets().iter().map(|&s| mask_to_indices(s)).collect();
        assert_eq!(
            as_indices,
            vec![
                vec![0],
                vec![1],
                vec![2],
                vec![0, 1],
                vec![0, 2],
                vec![1, 2],
                vec![0, 1, 2]
            ]
        );
    }

    #[test]
    fn parse_matrix_roundtrip_and_errors() {
        let matrix = parse_matrix("1 1 1\n0 2 1\n").unwrap();
        assert_eq!(matrix.num_rows(), 2);
        assert_eq!(matrix.row(1), &[0, 2, 1]);

        let err = parse_matrix("1 x 1").unwrap_err();
        assert!(matches!(err, Error::MatrixParse { line: 1, .. }));
        let err = parse_matrix("1 1\n1").unwrap_err();
        assert!(matches!(err, Error::MatrixParse { line: 2, .. }));
        let err = parse_matrix("0 0").unwrap_err();
        assert!(matches!(err, Error::MatrixParse { line: 1, .. }));
    }

    #[test]
    fn ordering_chain_holds() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(6);
        for _ in 0..100 {
            let rows = rng.gen_range(1..=6);
            let cols = rng.gen_range(1..=8);
            let mut data = Vec::new();
            for _ in 0..rows {
                loop {
                    let row: Vec<u32> = (0..cols).map(|_| rng.gen_range(0..=2)).collect();
                    if row.iter().any(|&e| e > 0) {
                        data.push(row);
                        break;
                    }
                }
            }
            let matrix = ExponentMatrix::new(data).unwrap();
            let naive = n_naive(&matrix).unwrap();
            let opt = n_opt(&matrix);
            let fin = n_final(&matrix).unwrap().total;
            assert!(fin <= opt, "final {fin} > opt {opt}");
            assert!(opt <= naive, "opt {opt} > naive {naive}");
        }
    }
}
