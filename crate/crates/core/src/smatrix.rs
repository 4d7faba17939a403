//! Hadamard-S coding matrices.
//!
//! Two cyclic constructions are supported:
//!
//! * maximal-length shift-register sequences for `n = 2^k - 1`,
//! * quadratic residues (plus zero) for primes `n ≡ 3 (mod 4)`.
//!
//! Row `i` of the matrix is the first row cyclically shifted left by `i`,
//! so `S(i, j) = s[(i + j) mod n]`. When both constructions apply the
//! m-sequence is used.

use std::fmt;
use std::io::{BufRead, Write};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Primitive feedback polynomials, bit `j` set for each `x^j` term below
/// the leading `x^k`. Recurrence: `a[t+k] = XOR_j c_j a[t+j]`.
const PRIMITIVE_TAPS: &[(u32, u32)] = &[
    (2, 0b11),              // x^2 + x + 1
    (3, 0b101),             // x^3 + x^2 + 1
    (4, 0b1001),            // x^4 + x^3 + 1
    (5, 0b1001),            // x^5 + x^3 + 1
    (6, 0b10_0001),         // x^6 + x^5 + 1
    (7, 0b100_0001),        // x^7 + x^6 + 1
    (8, 0b111_0001),        // x^8 + x^6 + x^5 + x^4 + 1
    (9, 0b10_0001),         // x^9 + x^5 + 1
    (10, 0b1000_0001),      // x^10 + x^7 + 1
    (11, 0b10_0000_0001),   // x^11 + x^9 + 1
    (12, 0b1100_0001_0001), // x^12 + x^11 + x^10 + x^4 + 1
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Construction {
    QuadraticResidue,
    /// Maximal-length sequence from the given feedback polynomial. `taps`
    /// uses the same encoding as the internal table, with the degree kept
    /// alongside.
    MSequence {
        degree: u32,
        taps: u32,
    },
}

impl fmt::Display for Construction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Construction::QuadraticResidue => write!(f, "quadratic-residue"),
            Construction::MSequence { degree, taps } => {
                write!(f, "m-sequence(x^{degree}")?;
                for j in (0..*degree).rev() {
                    if taps >> j & 1 == 1 {
                        match j {
                            0 => write!(f, " + 1")?,
                            1 => write!(f, " + x")?,
                            _ => write!(f, " + x^{j}")?,
                        }
                    }
                }
                write!(f, ")")
            }
        }
    }
}

/// Binary Hadamard-S matrix of order `n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SMatrix {
    order: usize,
    first_row: Vec<u8>,
    construction: Construction,
}

impl SMatrix {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn construction(&self) -> Construction {
        self.construction
    }

    pub fn first_row(&self) -> &[u8] {
        &self.first_row
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> u8 {
        self.first_row[(i + j) % self.order]
    }

    pub fn row(&self, i: usize) -> Vec<u8> {
        (0..self.order).map(|j| self.get(i, j)).collect()
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.order, self.order, |i, j| f64::from(self.get(i, j)))
    }

    /// Check the four defining properties with integer arithmetic.
    pub fn check_invariants(&self) -> Result<()> {
        check_s_invariants(&self.rows())
    }

    pub fn rows(&self) -> Vec<Vec<u8>> {
        (0..self.order).map(|i| self.row(i)).collect()
    }

    /// Closed-form inverse `(2/(n+1)) (2Sᵀ - J)`.
    pub fn inverse(&self) -> SMatrixInverse {
        smatrix_inverse(self)
    }

    /// Reconstruct from explicit rows. The rows must form a cyclic S-matrix;
    /// the construction tag is the one this crate uses for that order.
    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 || rows.iter().any(|r| r.len() != n) {
            return Err(Error::DimensionMismatch(format!(
                "S-matrix rows must be square, got {n} rows"
            )));
        }
        check_s_invariants(rows)?;
        let first_row = rows[0].clone();
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v != first_row[(i + j) % n] {
                    return Err(Error::InvalidValue(format!(
                        "row {i} is not the first row cyclically shifted left by {i}"
                    )));
                }
            }
        }
        let construction = match build_smatrix(n) {
            Ok(reference) => reference.construction,
            Err(_) => Construction::QuadraticResidue,
        };
        Ok(Self {
            order: n,
            first_row,
            construction,
        })
    }

    /// One row per line, comma-separated 0/1, no header.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        for i in 0..self.order {
            let line: Vec<String> = self.row(i).iter().map(|v| v.to_string()).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut rows = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let row = line
                .split(',')
                .map(|t| match t.trim() {
                    "0" => Ok(0u8),
                    "1" => Ok(1u8),
                    other => Err(Error::InvalidValue(format!(
                        "line {}: S-matrix entry {other:?} is not 0 or 1",
                        lineno + 1
                    ))),
                })
                .collect::<Result<Vec<u8>>>()?;
            rows.push(row);
        }
        Self::from_rows(&rows)
    }
}

fn check_s_invariants(rows: &[Vec<u8>]) -> Result<()> {
    let n = rows.len();
    if n == 0 || !(n + 1).is_multiple_of(4) {
        return Err(Error::InvalidValue(format!(
            "order {n} is not of the form 4t - 1"
        )));
    }
    let weight = n.div_ceil(2);
    let overlap = (n + 1) / 4;
    for (i, r) in rows.iter().enumerate() {
        if r.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "row {i} has {} entries, expected {n}",
                r.len()
            )));
        }
        if r.iter().any(|&v| v > 1) {
            return Err(Error::InvalidValue(format!(
                "row {i} has a non-binary entry"
            )));
        }
        let w: usize = r.iter().map(|&v| v as usize).sum();
        if w != weight {
            return Err(Error::InvalidValue(format!(
                "row {i} weight {w}, expected {weight}"
            )));
        }
    }
    for j in 0..n {
        let w: usize = rows.iter().map(|r| r[j] as usize).sum();
        if w != weight {
            return Err(Error::InvalidValue(format!(
                "column {j} weight {w}, expected {weight}"
            )));
        }
    }
    for a in 0..n {
        for b in (a + 1)..n {
            let common: usize = rows[a]
                .iter()
                .zip(&rows[b])
                .map(|(&x, &y)| (x & y) as usize)
                .sum();
            if common != overlap {
                return Err(Error::InvalidValue(format!(
                    "rows {a} and {b} share {common} ones, expected {overlap}"
                )));
            }
        }
    }
    // (2S - J)(2S - J)^T = (n+1) I - J
    let n_i = n as i64;
    for a in 0..n {
        for b in 0..n {
            let dot: i64 = rows[a]
                .iter()
                .zip(&rows[b])
                .map(|(&x, &y)| (2 * x as i64 - 1) * (2 * y as i64 - 1))
                .sum();
            let expected = if a == b { n_i } else { -1 };
            if dot != expected {
                return Err(Error::InvalidValue(format!(
                    "(2S-J)(2S-J)^T entry ({a},{b}) = {dot}, expected {expected}"
                )));
            }
        }
    }
    Ok(())
}

fn is_prime(n: usize) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2;
    while d * d <= n {
        if n.is_multiple_of(d) {
            return false;
        }
        d += 1;
    }
    true
}

fn mersenne_degree(n: usize) -> Option<u32> {
    let m = n + 1;
    (m >= 4 && m.is_power_of_two()).then(|| m.trailing_zeros())
}

fn m_sequence(degree: u32, taps: u32) -> Vec<u8> {
    let n = (1usize << degree) - 1;
    let k = degree as usize;
    let mut seq = vec![1u8; k];
    seq.reserve(n.saturating_sub(k));
    while seq.len() < n {
        let t = seq.len() - k;
        let mut bit = 0u8;
        for j in 0..k {
            if taps >> j & 1 == 1 {
                bit ^= seq[t + j];
            }
        }
        seq.push(bit);
    }
    seq.truncate(n);
    seq
}

fn quadratic_residue_row(p: usize) -> Vec<u8> {
    let mut row = vec![0u8; p];
    row[0] = 1;
    for x in 1..p {
        row[x * x % p] = 1;
    }
    row
}

/// Build the S-matrix of the requested order.
pub fn build_smatrix(order: usize) -> Result<SMatrix> {
    if let Some(degree) = mersenne_degree(order) {
        if let Some(&(_, taps)) = PRIMITIVE_TAPS.iter().find(|(d, _)| *d == degree) {
            return Ok(SMatrix {
                order,
                first_row: m_sequence(degree, taps),
                construction: Construction::MSequence { degree, taps },
            });
        }
    }
    if order % 4 == 3 && is_prime(order) {
        return Ok(SMatrix {
            order,
            first_row: quadratic_residue_row(order),
            construction: Construction::QuadraticResidue,
        });
    }
    Err(Error::UnsupportedOrder(order))
}

/// Orders in `1..=limit` that [`build_smatrix`] accepts.
pub fn supported_orders(limit: usize) -> Vec<usize> {
    (1..=limit).filter(|&n| build_smatrix(n).is_ok()).collect()
}

/// Closed-form inverse of an S-matrix; entries are `±2/(n+1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SMatrixInverse {
    entries: DMatrix<f64>,
}

impl SMatrixInverse {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.entries
    }
}

pub fn smatrix_inverse(s: &SMatrix) -> SMatrixInverse {
    let n = s.order();
    let c = 2.0 / (n as f64 + 1.0);
    // Sᵀ(i, j) = S(j, i)
    let entries = DMatrix::from_fn(n, n, |i, j| c * (2.0 * f64::from(s.get(j, i)) - 1.0));
    SMatrixInverse { entries }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Brute-force oracle, independent of `check_s_invariants`.
    fn exhaustive_ok(rows: &[Vec<u8>]) -> bool {
        let n = rows.len();
        let w = n.div_ceil(2);
        let o = (n + 1) / 4;
        rows.iter()
            .all(|r| r.iter().filter(|&&v| v == 1).count() == w && r.iter().all(|&v| v <= 1))
            && (0..n).all(|j| rows.iter().filter(|r| r[j] == 1).count() == w)
            && (0..n).all(|a| {
                (0..n).all(|b| {
                    a == b
                        || (0..n)
                            .filter(|&j| rows[a][j] == 1 && rows[b][j] == 1)
                            .count()
                            == o
                })
            })
    }

    #[test]
    fn order_three_is_shifts_of_110() {
        let s = build_smatrix(3).unwrap();
        assert_eq!(s.rows(), vec![vec![1, 1, 0], vec![1, 0, 1], vec![0, 1, 1]]);
        assert!(exhaustive_ok(&s.rows()));
    }

    #[test]
    fn order_seven_is_m_sequence() {
        let s = build_smatrix(7).unwrap();
        assert_eq!(s.first_row(), &[1, 1, 1, 0, 1, 0, 0]);
        assert!(matches!(
            s.construction(),
            Construction::MSequence { degree: 3, .. }
        ));
        assert!(s
            .rows()
            .iter()
            .all(|r| r.iter().map(|&v| v as usize).sum::<usize>() == 4));
        assert!(exhaustive_ok(&s.rows()));
    }

    #[test]
    fn order_four_unsupported() {
        assert!(matches!(build_smatrix(4), Err(Error::UnsupportedOrder(4))));
        assert_eq!(
            build_smatrix(4).unwrap_err().to_string(),
            "unsupported-order: 4"
        );
        for n in [0, 1, 2, 5, 9, 13, 21, 27] {
            assert!(build_smatrix(n).is_err(), "order {n}");
        }
    }

    #[test]
    fn all_supported_orders_pass_both_checks() {
        let orders = supported_orders(130);
        for n in [
            3, 7, 11, 15, 19, 23, 31, 43, 47, 59, 63, 67, 71, 79, 83, 103, 107, 127,
        ] {
            assert!(orders.contains(&n), "order {n} missing");
        }
        for n in orders {
            let s = build_smatrix(n).unwrap();
            s.check_invariants()
                .unwrap_or_else(|e| panic!("order {n}: {e}"));
            assert!(exhaustive_ok(&s.rows()), "order {n}");
        }
    }

    #[test]
    fn large_m_sequences_have_ideal_autocorrelation() {
        // Row overlap for cyclic matrices is the periodic autocorrelation.
        for degree in 2..=12u32 {
            let n = (1usize << degree) - 1;
            let s = build_smatrix(n).unwrap();
            let r = s.first_row();
            assert_eq!(r.iter().map(|&v| v as usize).sum::<usize>(), n.div_ceil(2));
            for shift in 1..n {
                let c: usize = (0..n).map(|j| (r[j] & r[(j + shift) % n]) as usize).sum();
                assert_eq!(c, (n + 1) / 4, "degree {degree} shift {shift}");
            }
        }
    }

    #[test]
    fn cyclic_structure() {
        let s = build_smatrix(19).unwrap();
        let r0 = s.row(0);
        for i in 0..19 {
            let shifted: Vec<u8> = (0..19).map(|j| r0[(j + i) % 19]).collect();
            assert_eq!(s.row(i), shifted);
        }
    }

    #[test]
    fn inverse_entries_and_identity() {
        for (n, mag) in [(3usize, 0.5), (7, 0.25)] {
            let s = build_smatrix(n).unwrap();
            let inv = s.inverse();
            assert!(inv.matrix().iter().all(|&v| (v.abs() - mag).abs() < 1e-15));
            let oracle = s.to_matrix().try_inverse().unwrap();
            assert!((inv.matrix() - oracle).amax() < 1e-10);
        }
    }

    #[test]
    fn inverse_is_exact_for_supported_orders() {
        for n in supported_orders(63) {
            let s = build_smatrix(n).unwrap();
            let prod = s.to_matrix() * s.inverse().matrix();
            let err = (prod - DMatrix::<f64>::identity(n, n)).amax();
            assert!(err <= 1e-12, "order {n}: {err}");
        }
    }

    #[test]
    fn csv_round_trip_and_rejects() {
        let s = build_smatrix(11).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().count(), 11);
        assert!(text.lines().next().unwrap().starts_with("1,"));
        let back = SMatrix::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, s);

        assert!(SMatrix::read_csv("1,1,0\n1,0,1\n0,1,2\n".as_bytes()).is_err());
        assert!(SMatrix::read_csv("1,1,0\n1,0,1\n".as_bytes()).is_err());
        assert!(SMatrix::read_csv("1,1,1\n1,1,1\n1,1,1\n".as_bytes()).is_err());
    }

    #[test]
    fn construction_label() {
        let s = build_smatrix(7).unwrap();
        assert_eq!(s.construction().to_string(), "m-sequence(x^3 + x^2 + 1)");
        assert_eq!(
            build_smatrix(11).unwrap().construction().to_string(),
            "quadratic-residue"
        );
    }
}
