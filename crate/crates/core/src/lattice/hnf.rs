//! Integer kernel of a rational constraint matrix via unimodular column
//! reduction (Hermite-style).

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{Integer, One, Signed, Zero};

/// Clears denominators of a rational row and divides out the content,
/// producing a primitive integer row defining the same hyperplane.
pub fn primitive_integer_row(row: &[BigRational]) -> Option<Vec<BigInt>> {
    if row.iter().all(|q| q.is_zero()) {
        return None;
    }
    let mut lcm = BigInt::one();
    for q in row {
        lcm = lcm.lcm(q.denom());
    }
    let mut ints: Vec<BigInt> = row
        .iter()
        .map(|q| q.numer() * (&lcm / q.denom()))
        .collect();
    let mut g = BigInt::zero();
    for v in &ints {
        g = g.gcd(v);
    }
    if !g.is_zero() && !g.is_one() {
        for v in &mut ints {
            *v /= &g;
        }
    }
    Some(ints)
}

/// Basis of the lattice `{ k in Z^d : A k = 0 }` for an integer matrix `A`
/// given by rows. Column operations by unimodular matrices keep the column
/// span of the identity tracker equal to `Z^d`; the tracker columns that
/// end up annihilated by `A` form a kernel basis.
pub fn integer_kernel_basis(rows: &[Vec<BigInt>], d: usize) -> Vec<Vec<BigInt>> {
    // Work on the transposed picture: reduce A column-by-column.
    let mut a: Vec<Vec<BigInt>> = rows.to_vec();
    let mut u: Vec<Vec<BigInt>> = (0..d)
        .map(|i| (0..d).map(|j| if i == j { BigInt::one() } else { BigInt::zero() }).collect())
        .collect(); // u[col][coord]: tracker columns as vectors in Z^d

    let nrows = a.len();
    let mut pivot_col = 0usize;
    for r in 0..nrows {
        if pivot_col >= d {
            break;
        }
        // Reduce row r over columns pivot_col..d to a single nonzero entry
        // using gcd column operations.
        loop {
            // Find column with smallest nonzero |entry| in row r.
            let mut best: Option<usize> = None;
            for c in pivot_col..d {
                if !a[r][c].is_zero() {
                    best = match best {
                        None => Some(c),
                        Some(b) if a[r][c].abs() < a[r][b].abs() => Some(c),
                        keep => keep,
                    };
                }
            }
            let Some(b) = best else { break };
            a.iter_mut().for_each(|row| row.swap(pivot_col, b));
            u.swap(pivot_col, b);
            // Eliminate the other entries in row r by integer quotients.
            let mut any_left = false;
            for c in (pivot_col + 1)..d {
                if a[r][c].is_zero() {
                    continue;
                }
                let q = div_round(&a[r][c], &a[r][pivot_col]);
                if !q.is_zero() {
                    for row in a.iter_mut() {
                        let sub = &row[pivot_col] * &q;
                        row[c] -= sub;
                    }
                    let sub: Vec<BigInt> = u[pivot_col].iter().map(|x| x * &q).collect();
                    for (x, s) in u[c].iter_mut().zip(sub) {
                        *x -= s;
                    }
                }
                if !a[r][c].is_zero() {
                    any_left = true;
                }
            }
            if !any_left {
                break;
            }
        }
        if !a[r][pivot_col].is_zero() {
            pivot_col += 1;
        }
    }
    // Columns pivot_col..d of the tracker are annihilated by every row.
    let mut basis: Vec<Vec<BigInt>> = u[pivot_col..].to_vec();
    for v in &mut basis {
        normalize_sign(v);
    }
    basis.sort();
    basis
}

/// Rounded division, so gcd elimination shrinks entries quickly.
fn div_round(n: &BigInt, d: &BigInt) -> BigInt {
    let (q, r) = n.div_rem(d);
    let two_r: BigInt = &r * 2;
    if two_r.abs() > d.abs() {
        if (r.is_negative()) == (d.is_negative()) {
            q + 1
        } else {
            q - 1
        }
    } else {
        q
    }
}

fn normalize_sign(v: &mut [BigInt]) {
    for x in v.iter() {
        if x.is_positive() {
            return;
        }
        if x.is_negative() {
            for y in v.iter_mut() {
                *y = -y.clone();
            }
            return;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bi(rows: &[&[i64]]) -> Vec<Vec<BigInt>> {
        rows.iter()
            .map(|r| r.iter().map(|&x| BigInt::from(x)).collect())
            .collect()
    }

    fn to_i64(basis: &[Vec<BigInt>]) -> Vec<Vec<i64>> {
        basis
            .iter()
            .map(|v| v.iter().map(|x| i64::try_from(x).unwrap()).collect())
            .collect()
    }

    #[test]
    fn kernel_of_single_row() {
        let b = integer_kernel_basis(&bi(&[&[1, 1]]), 2);
        assert_eq!(to_i64(&b), vec![vec![1, -1]]);
    }

    #[test]
    fn full_rank_has_empty_kernel() {
        let b = integer_kernel_basis(&bi(&[&[1, 0], &[0, 1]]), 2);
        assert!(b.is_empty());
        let b = integer_kernel_basis(&bi(&[&[2, 3], &[1, 1]]), 2);
        assert!(b.is_empty());
    }

    #[test]
    fn kernel_is_saturated_not_just_a_finite_index_sublattice() {
        // Row (2, 4): kernel lattice is generated by (2, -1), not (4, -2).
        let b = integer_kernel_basis(&bi(&[&[2, 4]]), 2);
        assert_eq!(to_i64(&b), vec![vec![2, -1]]);
    }

    #[test]
    fn three_dims_rank_one() {
        let b = integer_kernel_basis(&bi(&[&[1, 1, 1]]), 3);
        assert_eq!(b.len(), 2);
        // Every basis vector must satisfy the constraint.
        for v in to_i64(&b) {
            assert_eq!(v.iter().sum::<i64>(), 0);
        }
    }

    /// Randomized saturation check: every window point satisfying the
    /// constraints must be an integer combination of the returned basis.
    #[test]
    fn kernel_matches_brute_force_on_windows() {
        let cases: Vec<Vec<Vec<i64>>> = vec![
            vec![vec![1, 2, 3]],
            vec![vec![2, -2, 4]],
            vec![vec![1, 1, 0], vec![0, 1, 1]],
            vec![vec![3, 5, 7], vec![1, 0, 1]],
        ];
        for rows in cases {
            let rows_b: Vec<Vec<BigInt>> = rows
                .iter()
                .map(|r| r.iter().map(|&x| BigInt::from(x)).collect())
                .collect();
            let basis = to_i64(&integer_kernel_basis(&rows_b, 3));
            for x in -6..=6i64 {
                for y in -6..=6i64 {
                    for z in -6..=6i64 {
                        let k = [x, y, z];
                        let in_kernel = rows
                            .iter()
                            .all(|r| r.iter().zip(k).map(|(a, b)| a * b).sum::<i64>() == 0);
                        if in_kernel {
                            assert!(
                                in_span(&basis, &k),
                                "{k:?} solves {rows:?} but is outside the basis span"
                            );
                        }
                    }
                }
            }
        }
    }

    fn in_span(basis: &[Vec<i64>], k: &[i64; 3]) -> bool {
        if basis.is_empty() {
            return k.iter().all(|&c| c == 0);
        }
        // Search small integer combinations; windows are tiny.
        let r = 40i64;
        match basis.len() {
            1 => (-r..=r).any(|a| (0..3).all(|i| a * basis[0][i] == k[i])),
            2 => (-r..=r).any(|a| {
                (-r..=r).any(|b| (0..3).all(|i| a * basis[0][i] + b * basis[1][i] == k[i]))
            }),
            _ => true,
        }
    }
}
