//! Compressed sparse row operators on the P1 vertex graph and Jacobi
//! preconditioned Krylov solvers.

use std::io::Write;

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::mesh::Mesh2D;

/// CSR sparsity of the vertex graph plus, for every triangle, the value
/// slots of its 3×3 local block.
#[derive(Debug, Clone)]
pub struct Pattern {
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub(crate) element_slots: Vec<[[usize; 3]; 3]>,
    pub(crate) diag_slots: Vec<usize>,
}

impl Pattern {
    pub fn from_mesh(mesh: &Mesh2D) -> Self {
        let n = mesh.num_vertices();
        let mut adj: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        for tri in mesh.triangles() {
            for &a in tri {
                for &b in tri {
                    adj[a].push(b);
                }
            }
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for row in &mut adj {
            row.sort_unstable();
            row.dedup();
            col_idx.extend_from_slice(row);
            row_ptr.push(col_idx.len());
        }
        let slot = |i: usize, j: usize| -> usize {
            let cols = &col_idx[row_ptr[i]..row_ptr[i + 1]];
            row_ptr[i] + cols.binary_search(&j).expect("pattern contains every element pair")
        };
        let element_slots = mesh
            .triangles()
            .iter()
            .map(|tri| {
                let mut s = [[0; 3]; 3];
                for a in 0..3 {
                    for b in 0..3 {
                        s[a][b] = slot(tri[a], tri[b]);
                    }
                }
                s
            })
            .collect();
        let diag_slots = (0..n).map(|i| slot(i, i)).collect();
        Self { row_ptr, col_idx, element_slots, diag_slots }
    }

    pub fn dim(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }
}

/// Square sparse matrix in CSR form.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOperator {
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseOperator {
    pub fn zeros(pattern: &Pattern) -> Self {
        Self { row_ptr: pattern.row_ptr.clone(), col_idx: pattern.col_idx.clone(), values: vec![0.0; pattern.nnz()] }
    }

    /// Assemble from `(row, col, value)` triplets; duplicates are summed in
    /// input order.
    pub fn from_triplets(dim: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); dim];
        for &(i, j, v) in triplets {
            if i >= dim || j >= dim {
                return Err(Error::invalid(format!("triplet ({i}, {j}) outside dimension {dim}")));
            }
            rows[i].push((j, v));
        }
        let mut row_ptr = vec![0];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for mut row in rows {
            row.sort_by_key(|e| e.0);
            for (j, v) in row {
                if col_idx.len() > *row_ptr.last().unwrap() && *col_idx.last().unwrap() == j {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(j);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Ok(Self { row_ptr, col_idx, values })
    }

    pub fn dim(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.dim()).flat_map(move |i| {
            (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |k| (i, self.col_idx[k], self.values[k]))
        })
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let cols = &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]];
        cols.binary_search(&j).map(|k| self.values[self.row_ptr[i] + k]).unwrap_or(0.0)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.get(i, i)).collect()
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64], exec: Exec) {
        exec.fill(y, |i| {
            (self.row_ptr[i]..self.row_ptr[i + 1]).map(|k| self.values[k] * x[self.col_idx[k]]).sum()
        });
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim()];
        self.matvec(x, &mut y, Exec::Sequential);
        y
    }

    /// Largest `|A_ij - A_ji|`.
    pub fn asymmetry(&self) -> f64 {
        self.triplets().map(|(i, j, v)| (v - self.get(j, i)).abs()).fold(0.0, f64::max)
    }

    /// Coordinate text dump, one `i j value` line per stored entry.
    pub fn write_coordinate<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for (i, j, v) in self.triplets() {
            writeln!(w, "{i} {j} {v:.16e}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearStats {
    pub iterations: usize,
    pub residual: f64,
}

/// Conjugate gradients with diagonal preconditioning, to
/// `‖b - Ax‖ <= tol ‖b‖`.
pub fn conjugate_gradient(a: &SparseOperator, b: &[f64], x: &mut [f64], tol: f64, max_iter: usize, exec: Exec) -> Result<LinearStats> {
    let n = a.dim();
    let inv_diag = jacobi(a)?;
    let b_norm = exec.dot(b, b).sqrt();
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(LinearStats { iterations: 0, residual: 0.0 });
    }
    let mut r = vec![0.0; n];
    a.matvec(x, &mut r, exec);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let mut z: Vec<f64> = (0..n).map(|i| inv_diag[i] * r[i]).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = exec.dot(&r, &z);
    let target = tol * b_norm;
    for it in 0..max_iter {
        let res = exec.dot(&r, &r).sqrt();
        if res <= target {
            return Ok(LinearStats { iterations: it, residual: res / b_norm });
        }
        a.matvec(&p, &mut ap, exec);
        let pap = exec.dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::Linear(format!("CG breakdown: p^T A p = {pap:e}")));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
            z[i] = inv_diag[i] * r[i];
        }
        let rz_new = exec.dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let res = exec.dot(&r, &r).sqrt() / b_norm;
    Err(Error::Linear(format!("CG did not reach {tol:e} in {max_iter} iterations (relative residual {res:e})")))
}

/// BiCGSTAB with diagonal preconditioning, same contract as
/// [`conjugate_gradient`].
pub fn bicgstab(a: &SparseOperator, b: &[f64], x: &mut [f64], tol: f64, max_iter: usize, exec: Exec) -> Result<LinearStats> {
    let n = a.dim();
    let inv_diag = jacobi(a)?;
    let b_norm = exec.dot(b, b).sqrt();
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(LinearStats { iterations: 0, residual: 0.0 });
    }
    let mut r = vec![0.0; n];
    a.matvec(x, &mut r, exec);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let r_hat = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut t = vec![0.0; n];
    let target = tol * b_norm;
    for it in 0..max_iter {
        let res = exec.dot(&r, &r).sqrt();
        if res <= target {
            return Ok(LinearStats { iterations: it, residual: res / b_norm });
        }
        let rho_new = exec.dot(&r_hat, &r);
        if rho_new == 0.0 || omega == 0.0 {
            return Err(Error::Linear("BiCGSTAB breakdown".into()));
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
            y[i] = inv_diag[i] * p[i];
        }
        a.matvec(&y, &mut v, exec);
        let rv = exec.dot(&r_hat, &v);
        if rv == 0.0 {
            return Err(Error::Linear("BiCGSTAB breakdown".into()));
        }
        alpha = rho / rv;
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if exec.dot(&s, &s).sqrt() <= target {
            for i in 0..n {
                x[i] += alpha * y[i];
            }
            let res = exec.dot(&s, &s).sqrt();
            return Ok(LinearStats { iterations: it + 1, residual: res / b_norm });
        }
        for i in 0..n {
            z[i] = inv_diag[i] * s[i];
        }
        a.matvec(&z, &mut t, exec);
        let tt = exec.dot(&t, &t);
        omega = if tt > 0.0 { exec.dot(&t, &s) / tt } else { 0.0 };
        for i in 0..n {
            x[i] += alpha * y[i] + omega * z[i];
            r[i] = s[i] - omega * t[i];
        }
    }
    let res = exec.dot(&r, &r).sqrt() / b_norm;
    Err(Error::Linear(format!("BiCGSTAB did not reach {tol:e} in {max_iter} iterations (relative residual {res:e})")))
}

fn jacobi(a: &SparseOperator) -> Result<Vec<f64>> {
    a.diagonal()
        .into_iter()
        .enumerate()
        .map(|(i, d)| {
            if d != 0.0 && d.is_finite() {
                Ok(1.0 / d)
            } else {
                Err(Error::Linear(format!("zero or non-finite diagonal at row {i}")))
            }
        })
        .collect()
}

/// Solve `A x = b`: CG when `spd` is claimed (falling back to BiCGSTAB on
/// breakdown), BiCGSTAB otherwise.
pub fn solve(a: &SparseOperator, b: &[f64], x: &mut [f64], tol: f64, spd: bool, exec: Exec) -> Result<LinearStats> {
    let max_iter = 20 * a.dim() + 1000;
    if spd {
        let x0 = x.to_vec();
        match conjugate_gradient(a, b, x, tol, max_iter, exec) {
            Ok(stats) => return Ok(stats),
            Err(_) => x.copy_from_slice(&x0),
        }
    }
    bicgstab(a, b, x, tol, max_iter, exec)
}
