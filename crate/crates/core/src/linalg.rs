//! Exact dense linear algebra over the rationals.
//!
//! The hitting-probability systems assembled by the truncation module are
//! small (one unknown per skeleton vertex), dense after elimination of the
//! free subtrees, and need exact answers, so plain Gaussian elimination
//! with exact pivoting over `BigRational` is the right tool.

use crate::rational::Rat;
use num::Zero;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LinalgError {
    #[error("singular system: no pivot in column {0}")]
    Singular(usize),
    #[error("dimension mismatch between matrix and right-hand sides")]
    Shape,
}

/// Solves `A X = B` for several right-hand sides at once, exactly.
/// `a` is row-major `n × n`; `b` is row-major `n × k`. Returns the `n × k`
/// solution, also row-major.
pub fn solve_exact(a: &[Vec<Rat>], b: &[Vec<Rat>]) -> Result<Vec<Vec<Rat>>, LinalgError> {
    let n = a.len();
    if b.len() != n || a.iter().any(|r| r.len() != n) {
        return Err(LinalgError::Shape);
    }
    let k = b.first().map_or(0, |r| r.len());
    if b.iter().any(|r| r.len() != k) {
        return Err(LinalgError::Shape);
    }
    let mut m: Vec<Vec<Rat>> = a.to_vec();
    let mut rhs: Vec<Vec<Rat>> = b.to_vec();
    for col in 0..n {
        let pivot_row = (col..n)
            .find(|&r| !m[r][col].is_zero())
            .ok_or(LinalgError::Singular(col))?;
        m.swap(col, pivot_row);
        rhs.swap(col, pivot_row);
        let inv = m[col][col].clone().recip();
        for j in col..n {
            m[col][j] *= &inv;
        }
        for j in 0..k {
            rhs[col][j] *= &inv;
        }
        for r in 0..n {
            if r == col || m[r][col].is_zero() {
                continue;
            }
            let f = m[r][col].clone();
            for j in col..n {
                let t = &f * &m[col][j];
                m[r][j] -= t;
            }
            for j in 0..k {
                let t = &f * &rhs[col][j];
                rhs[r][j] -= t;
            }
        }
    }
    Ok(rhs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{rat, ratio};

    #[test]
    fn solves_small_system_exactly() {
        // [2 1; 1 3] x = [5; 10] has x = (1, 3).
        let a = vec![vec![rat(2), rat(1)], vec![rat(1), rat(3)]];
        let b = vec![vec![rat(5)], vec![rat(10)]];
        let x = solve_exact(&a, &b).unwrap();
        assert_eq!(x, vec![vec![rat(1)], vec![rat(3)]]);
    }

    #[test]
    fn multiple_right_hand_sides() {
        // Inverse of [1 2; 3 4] via B = I.
        let a = vec![vec![rat(1), rat(2)], vec![rat(3), rat(4)]];
        let b = vec![vec![rat(1), rat(0)], vec![rat(0), rat(1)]];
        let x = solve_exact(&a, &b).unwrap();
        assert_eq!(
            x,
            vec![vec![rat(-2), rat(1)], vec![ratio(3, 2), ratio(-1, 2)]]
        );
    }

    #[test]
    fn needs_row_swap() {
        let a = vec![vec![rat(0), rat(1)], vec![rat(1), rat(0)]];
        let b = vec![vec![rat(7)], vec![rat(9)]];
        let x = solve_exact(&a, &b).unwrap();
        assert_eq!(x, vec![vec![rat(9)], vec![rat(7)]]);
    }

    #[test]
    fn reports_singularity() {
        let a = vec![vec![rat(1), rat(2)], vec![rat(2), rat(4)]];
        let b = vec![vec![rat(1)], vec![rat(1)]];
        assert_eq!(solve_exact(&a, &b), Err(LinalgError::Singular(1)));
    }
}
