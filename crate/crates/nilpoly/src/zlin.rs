//! Integer lattices in echelon form: exact membership with coefficient
//! witnesses, used wherever a commutative layer reduces a group question to
//! linear algebra over ℤ.

use num::bigint::BigInt;
use num::{Signed, Zero};

/// A lattice in ℤ^dim kept as an echelon basis. Each basis row is augmented
/// with its expression over the originally inserted generators, so
/// membership tests can return explicit integer combinations.
#[derive(Debug, Clone)]
pub struct ZLattice {
    dim: usize,
    n_gens: usize,
    /// pivot column → row; row.0 is the lattice vector, row.1 the
    /// coordinates over the original generators.
    rows: Vec<Option<(Vec<BigInt>, Vec<BigInt>)>>,
}

impl ZLattice {
    pub fn new(dim: usize) -> Self {
        ZLattice {
            dim,
            n_gens: 0,
            rows: vec![None; dim],
        }
    }

    pub fn from_vectors<I: IntoIterator<Item = Vec<i64>>>(dim: usize, gens: I) -> Self {
        let mut lat = ZLattice::new(dim);
        for g in gens {
            lat.insert_i64(&g);
        }
        lat
    }

    pub fn insert_i64(&mut self, v: &[i64]) {
        let big: Vec<BigInt> = v.iter().map(|&x| BigInt::from(x)).collect();
        self.insert(big);
    }

    /// Inserts one generator, keeping echelon form. Returns true when the
    /// rank grew.
    pub fn insert(&mut self, v: Vec<BigInt>) -> bool {
        assert_eq!(v.len(), self.dim);
        let idx = self.n_gens;
        self.n_gens += 1;
        let mut tail = vec![BigInt::zero(); idx + 1];
        tail[idx] = BigInt::from(1);
        for row in self.rows.iter_mut().flatten() {
            row.1.resize(self.n_gens, BigInt::zero());
        }
        self.reduce_in(v, tail)
    }

    fn reduce_in(&mut self, mut v: Vec<BigInt>, mut tail: Vec<BigInt>) -> bool {
        tail.resize(self.n_gens, BigInt::zero());
        for col in 0..self.dim {
            if v[col].is_zero() {
                continue;
            }
            match &mut self.rows[col] {
                None => {
                    if v[col].is_negative() {
                        neg(&mut v);
                        neg(&mut tail);
                    }
                    self.rows[col] = Some((v, tail));
                    return true;
                }
                Some((p, pt)) => loop {
                    let q = &v[col] / &p[col];
                    if !q.is_zero() {
                        sub_mul(&mut v, p, &q);
                        sub_mul(&mut tail, pt, &q);
                    }
                    if v[col].is_zero() {
                        break;
                    }
                    std::mem::swap(p, &mut v);
                    std::mem::swap(pt, &mut tail);
                },
            }
        }
        false
    }

    pub fn rank(&self) -> usize {
        self.rows.iter().flatten().count()
    }

    /// Membership test. On success returns coefficients c with
    /// target = Σ cᵢ·genᵢ over the generators in insertion order.
    pub fn member_i64(&self, target: &[i64]) -> Option<Vec<BigInt>> {
        let big: Vec<BigInt> = target.iter().map(|&x| BigInt::from(x)).collect();
        self.member(&big)
    }

    pub fn member(&self, target: &[BigInt]) -> Option<Vec<BigInt>> {
        assert_eq!(target.len(), self.dim);
        let mut v = target.to_vec();
        let mut tail = vec![BigInt::zero(); self.n_gens];
        for col in 0..self.dim {
            if v[col].is_zero() {
                continue;
            }
            let (p, pt) = self.rows[col].as_ref()?;
            if (&v[col] % &p[col]).is_zero() {
                let q = &v[col] / &p[col];
                sub_mul(&mut v, p, &q);
                sub_mul(&mut tail, pt, &q);
            } else {
                return None;
            }
        }
        if v.iter().all(|x| x.is_zero()) {
            neg(&mut tail);
            Some(tail)
        } else {
            None
        }
    }
}

fn neg(v: &mut [BigInt]) {
    for x in v {
        *x = -std::mem::take(x);
    }
}

fn sub_mul(v: &mut [BigInt], p: &[BigInt], q: &BigInt) {
    for (a, b) in v.iter_mut().zip(p) {
        *a -= b * q;
    }
}
