//! Finite fields, linear codes and BCH-type column sets over `F_2`.

use crate::{Error, Result};

/// Irreducible moduli for `GF(2^e)`, `e = 2..=16`, as bit patterns including
/// the leading term.
const GF2_MODULI: [u32; 15] = [
    0x7, 0xB, 0x13, 0x25, 0x43, 0x83, 0x11D, 0x211, 0x409, 0x805, 0x1053, 0x201B, 0x4443, 0x8003, 0x1100B,
];

const MAX_PRIME: u64 = 1 << 31;

fn is_prime(p: u64) -> bool {
    if p < 2 {
        return false;
    }
    let mut d = 2u64;
    while d * d <= p {
        if p % d == 0 {
            return false;
        }
        d += 1;
    }
    true
}

fn poly_degree(a: u64) -> u32 {
    63 - a.leading_zeros()
}

fn poly_rem(mut a: u64, b: u64) -> u64 {
    let db = poly_degree(b);
    while a != 0 && poly_degree(a) >= db {
        a ^= b << (poly_degree(a) - db);
    }
    a
}

/// Irreducible over `F_2` iff no polynomial of degree `1..=deg/2` divides it.
fn gf2_irreducible(f: u64) -> bool {
    let deg = poly_degree(f);
    for d in 1..=deg / 2 {
        for g in (1u64 << d)..(1u64 << (d + 1)) {
            if poly_rem(f, g) == 0 {
                return false;
            }
        }
    }
    true
}

/// `F_p` for a prime `p < 2^31`, or `GF(2^e)` for `e <= 16`.
///
/// Elements are the integers `0..size()`. For extension fields an element's
/// bits are its coefficients in the polynomial basis.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Field {
    characteristic: u64,
    degree: u32,
    modulus: u32,
}

impl Field {
    pub fn new(p: u64, e: u32) -> Result<Field> {
        if !is_prime(p) || p >= MAX_PRIME || e == 0 {
            return Err(Error::UnsupportedField { p, e });
        }
        if e == 1 {
            return Ok(Field {
                characteristic: p,
                degree: 1,
                modulus: 0,
            });
        }
        if p != 2 || e > 16 {
            return Err(Error::UnsupportedField { p, e });
        }
        let modulus = GF2_MODULI[(e - 2) as usize];
        if !gf2_irreducible(modulus as u64) {
            return Err(Error::Internal(format!("table modulus {modulus:#x} is reducible")));
        }
        Ok(Field {
            characteristic: 2,
            degree: e,
            modulus,
        })
    }

    /// The field with `q` elements, if `q` is a supported prime power.
    pub fn with_order(q: u64) -> Result<Field> {
        if q >= 4 && q.is_power_of_two() {
            return Field::new(2, q.trailing_zeros());
        }
        Field::new(q, 1)
    }

    pub fn characteristic(&self) -> u64 {
        self.characteristic
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn size(&self) -> u64 {
        self.characteristic.pow(self.degree)
    }

    pub fn is_binary_extension(&self) -> bool {
        self.degree > 1
    }

    pub fn add(&self, a: u32, b: u32) -> u32 {
        if self.is_binary_extension() {
            a ^ b
        } else {
            ((a as u64 + b as u64) % self.characteristic) as u32
        }
    }

    pub fn neg(&self, a: u32) -> u32 {
        if self.is_binary_extension() || a == 0 {
            a
        } else {
            (self.characteristic - a as u64) as u32
        }
    }

    pub fn sub(&self, a: u32, b: u32) -> u32 {
        self.add(a, self.neg(b))
    }

    pub fn mul(&self, a: u32, b: u32) -> u32 {
        if !self.is_binary_extension() {
            return ((a as u64 * b as u64) % self.characteristic) as u32;
        }
        let (mut a, mut b) = (a as u64, b as u64);
        let mut acc = 0u64;
        while b != 0 {
            if b & 1 == 1 {
                acc ^= a;
            }
            b >>= 1;
            a <<= 1;
        }
        poly_rem(acc, self.modulus as u64) as u32
    }

    pub fn pow(&self, a: u32, mut e: u64) -> u32 {
        let mut base = a;
        let mut acc = 1;
        while e > 0 {
            if e & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            e >>= 1;
        }
        acc
    }

    /// Multiplicative inverse by Fermat; `None` for zero.
    pub fn inv(&self, a: u32) -> Option<u32> {
        (a != 0).then(|| self.pow(a, self.size() - 2))
    }

    pub fn dot(&self, u: &[u32], v: &[u32]) -> u32 {
        u.iter().zip(v).fold(0, |acc, (&a, &b)| self.add(acc, self.mul(a, b)))
    }

    pub fn elements(&self) -> impl Iterator<Item = u32> {
        0..self.size() as u32
    }
}

/// The code `{(<u, s_1>, ..., <u, s_m>) : u in F_q^k}` spanned by the rows
/// `s_1..s_m`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LinearCode {
    field: Field,
    message_len: usize,
    rows: Vec<Vec<u32>>,
}

impl LinearCode {
    pub fn new(field: Field, message_len: usize, rows: Vec<Vec<u32>>) -> Result<LinearCode> {
        for row in &rows {
            if row.len() != message_len {
                return Err(Error::DimensionMismatch {
                    expected: message_len,
                    found: row.len(),
                });
            }
            if let Some(&bad) = row.iter().find(|&&x| x as u64 >= field.size()) {
                return Err(Error::InvalidParameter(format!("symbol {bad} is not in F_{}", field.size())));
            }
        }
        Ok(LinearCode {
            field,
            message_len,
            rows,
        })
    }

    pub fn field(&self) -> &Field {
        &self.field
    }

    pub fn q(&self) -> u64 {
        self.field.size()
    }

    /// Message length `k`.
    pub fn dimension(&self) -> usize {
        self.message_len
    }

    /// Block length `m`.
    pub fn block_length(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[Vec<u32>] {
        &self.rows
    }

    pub fn encode(&self, message: &[u32]) -> Result<Vec<u32>> {
        if message.len() != self.message_len {
            return Err(Error::DimensionMismatch {
                expected: self.message_len,
                found: message.len(),
            });
        }
        Ok(self.rows.iter().map(|row| self.field.dot(message, row)).collect())
    }
}

/// Columns `(1, x_j, x_j^3, ..., x_j^(k-2))` over the nonzero `x_j` of
/// `GF(2^t)`, flattened to bit vectors of length `1 + t (k-1)/2`.
///
/// Any `k` of the columns are linearly independent over `F_2`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BchColumnSet {
    t: u32,
    k: u32,
    length: usize,
    columns: Vec<u64>,
}

impl BchColumnSet {
    pub fn degree(&self) -> u32 {
        self.t
    }

    pub fn independence(&self) -> u32 {
        self.k
    }

    /// Bit length `m` of each column.
    pub fn length(&self) -> usize {
        self.length
    }

    /// Column `j` as a bit mask; bit `i` is row `i`.
    pub fn columns(&self) -> &[u64] {
        &self.columns
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }
}

pub fn bch_columns(t: u32, k: u32) -> Result<BchColumnSet> {
    if k < 3 || k % 2 == 0 {
        return Err(Error::InvalidParameter(format!("independence k = {k} must be odd and at least 3")));
    }
    if t == 0 || t > 16 {
        return Err(Error::InvalidParameter(format!("extension degree t = {t} must be in 1..=16")));
    }
    if (k as u64 - 2) >= (1u64 << t) {
        return Err(Error::InvalidParameter(format!("k - 2 = {} must be below 2^t = {}", k - 2, 1u64 << t)));
    }
    let powers = (k as usize - 1) / 2;
    let length = 1 + t as usize * powers;
    if length > 64 {
        return Err(Error::InvalidParameter(format!("column length {length} exceeds 64 bits")));
    }
    let columns = if t == 1 {
        // GF(2) has the single nonzero element 1.
        vec![(0..powers).fold(1u64, |acc, i| acc | 1 << (1 + i))]
    } else {
        let field = Field::new(2, t)?;
        (1..(1u32 << t))
            .map(|x| {
                let mut col = 1u64;
                for i in 0..powers {
                    let v = field.pow(x, 2 * i as u64 + 1) as u64;
                    col |= v << (1 + i * t as usize);
                }
                col
            })
            .collect()
    };
    Ok(BchColumnSet {
        t,
        k,
        length,
        columns,
    })
}

/// Largest `n` allowed for an input length `m`: `2^floor(2(m-1)/(k-1)) - 1`.
pub fn nn_length_bound(m: usize, k: u32) -> u128 {
    let exp = (2 * (m as u64).saturating_sub(1)) / (k as u64 - 1);
    if exp >= 127 {
        u128::MAX
    } else {
        (1u128 << exp) - 1
    }
}

/// Rank over `F_2` of a set of bit-mask vectors.
pub fn gf2_rank(vectors: &[u64]) -> usize {
    let mut basis: Vec<u64> = Vec::new();
    for &v in vectors {
        let reduced = basis.iter().fold(v, |acc, &b| acc.min(acc ^ b));
        if reduced != 0 {
            basis.push(reduced);
            basis.sort_unstable_by(|a, b| b.cmp(a));
        }
    }
    basis.len()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prime_fields() {
        let f2 = Field::new(2, 1).unwrap();
        assert_eq!(f2.size(), 2);
        assert_eq!(f2.add(1, 1), 0);
        let f3 = Field::new(3, 1).unwrap();
        assert_eq!(f3.mul(2, 2), 1);
        assert_eq!(f3.inv(2), Some(2));
        assert_eq!(f3.inv(0), None);
    }

    #[test]
    fn gf4_multiplication() {
        let f = Field::new(2, 2).unwrap();
        // x * x = x + 1
        assert_eq!(f.mul(0b10, 0b10), 0b11);
    }

    #[test]
    fn unsupported_fields() {
        assert!(matches!(Field::new(4, 1), Err(Error::UnsupportedField { .. })));
        assert!(matches!(Field::new(3, 2), Err(Error::UnsupportedField { .. })));
        assert!(matches!(Field::new(2, 17), Err(Error::UnsupportedField { .. })));
        assert!(matches!(Field::new(2, 0), Err(Error::UnsupportedField { .. })));
        assert!(Field::with_order(6).is_err());
        assert_eq!(Field::with_order(8).unwrap().degree(), 3);
        assert_eq!(Field::with_order(7).unwrap().degree(), 1);
    }

    #[test]
    fn whole_modulus_table_is_irreducible() {
        for e in 2..=16 {
            Field::new(2, e).unwrap();
        }
        assert!(!gf2_irreducible(0b101)); // x^2 + 1 = (x + 1)^2
    }

    #[test]
    fn field_axioms_exhaustive_small() {
        for q in [2u64, 3, 4, 5, 7, 8, 16, 31, 32, 64] {
            let f = Field::with_order(q).unwrap();
            let els: Vec<u32> = f.elements().collect();
            for &a in &els {
                assert_eq!(f.add(a, f.neg(a)), 0);
                if a != 0 {
                    assert_eq!(f.mul(a, f.inv(a).unwrap()), 1, "q={q} a={a}");
                }
                for &b in &els {
                    assert_eq!(f.mul(a, b), f.mul(b, a));
                    for &c in &els {
                        assert_eq!(f.mul(f.mul(a, b), c), f.mul(a, f.mul(b, c)));
                        assert_eq!(f.mul(a, f.add(b, c)), f.add(f.mul(a, b), f.mul(a, c)));
                        assert_eq!(f.add(f.add(a, b), c), f.add(a, f.add(b, c)));
                    }
                }
            }
        }
    }

    #[test]
    fn encode_examples() {
        let f3 = Field::new(3, 1).unwrap();
        let code = LinearCode::new(f3, 1, vec![vec![1], vec![2], vec![0]]).unwrap();
        assert_eq!(code.encode(&[2]).unwrap(), vec![2, 1, 0]);
        assert_eq!(code.encode(&[0]).unwrap(), vec![0, 0, 0]);
        assert!(matches!(code.encode(&[1, 1]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn hadamard_rows_balance() {
        let k = 4;
        let f2 = Field::new(2, 1).unwrap();
        let rows: Vec<Vec<u32>> = (0..1u32 << k).map(|x| (0..k).map(|i| (x >> i) & 1).collect()).collect();
        let code = LinearCode::new(f2, k, rows).unwrap();
        for u in 1..1u32 << k {
            let msg: Vec<u32> = (0..k).map(|i| (u >> i) & 1).collect();
            let weight: u32 = code.encode(&msg).unwrap().iter().sum();
            assert_eq!(weight, 1 << (k - 1));
        }
    }

    #[test]
    fn bch_rejects_bad_parameters() {
        assert!(bch_columns(3, 1).is_err());
        assert!(bch_columns(3, 4).is_err());
        assert!(bch_columns(0, 3).is_err());
        assert!(bch_columns(1, 5).is_err());
    }

    #[test]
    fn bch_shapes() {
        let c = bch_columns(2, 3).unwrap();
        assert_eq!((c.len(), c.length()), (3, 3));
        let c = bch_columns(3, 3).unwrap();
        assert_eq!((c.len(), c.length()), (7, 4));
        assert_eq!(nn_length_bound(4, 3), 7);
    }

    fn subsets_independent(cols: &[u64], k: usize) -> bool {
        let n = cols.len();
        // Every subset of size <= k has full rank.
        (1u64..1 << n).filter(|s| s.count_ones() as usize <= k).all(|s| {
            let chosen: Vec<u64> = (0..n).filter(|i| s >> i & 1 == 1).map(|i| cols[i]).collect();
            gf2_rank(&chosen) == chosen.len()
        })
    }

    #[test]
    fn bch_independence_exhaustive() {
        for t in 2..=4 {
            for k in [3u32, 5] {
                if let Ok(c) = bch_columns(t, k) {
                    assert!(subsets_independent(c.columns(), k as usize), "t={t} k={k}");
                }
            }
        }
    }

    #[test]
    fn rank_basics() {
        assert_eq!(gf2_rank(&[0b01, 0b10, 0b11]), 2);
        assert_eq!(gf2_rank(&[0]), 0);
        assert_eq!(gf2_rank(&[0b100, 0b010, 0b001]), 3);
    }
}
