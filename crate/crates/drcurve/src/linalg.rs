//! Minimal dense linear algebra used by the learners. Row-major storage,
//! no external solver: the systems here are small (p in the tens to low
//! hundreds) and symmetric positive semidefinite.

/// Dense row-major matrix.
#[derive(Debug, Clone)]
pub struct Matrix {
    data: Vec<f64>,
    rows: usize,
    cols: usize,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { data: vec![0.0; rows * cols], rows, cols }
    }

    pub fn from_flat(data: Vec<f64>, rows: usize, cols: usize) -> Self {
        assert_eq!(data.len(), rows * cols);
        Matrix { data, rows, cols }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    /// X'X as a flat k*k buffer.
    pub fn xtx(&self) -> Vec<f64> {
        self.xtwx(None)
    }

    /// X'WX with optional diagonal weights.
    pub fn xtwx(&self, w: Option<&[f64]>) -> Vec<f64> {
        let k = self.cols;
        let mut out = vec![0.0; k * k];
        for r in 0..self.rows {
            let row = self.row(r);
            let wr = w.map_or(1.0, |w| w[r]);
            if wr == 0.0 {
                continue;
            }
            for i in 0..k {
                let xi = row[i] * wr;
                if xi == 0.0 {
                    continue;
                }
                let base = i * k;
                for j in i..k {
                    out[base + j] += xi * row[j];
                }
            }
        }
        for i in 0..k {
            for j in 0..i {
                out[i * k + j] = out[j * k + i];
            }
        }
        out
    }

    /// X'y, optionally weighted.
    pub fn xtwy(&self, y: &[f64], w: Option<&[f64]>) -> Vec<f64> {
        let k = self.cols;
        let mut out = vec![0.0; k];
        for r in 0..self.rows {
            let wr = w.map_or(1.0, |w| w[r]);
            let f = y[r] * wr;
            if f == 0.0 {
                continue;
            }
            let row = self.row(r);
            for i in 0..k {
                out[i] += row[i] * f;
            }
        }
        out
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.rows).map(|r| dot(self.row(r), x)).collect()
    }

    /// Copy of the matrix keeping only the given columns, in order.
    pub fn select_cols(&self, cols: &[usize]) -> Matrix {
        let mut flat = Vec::with_capacity(self.rows * cols.len());
        for r in 0..self.rows {
            let row = self.row(r);
            for &c in cols {
                flat.push(row[c]);
            }
        }
        Matrix::from_flat(flat, self.rows, cols.len())
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solve `A x = b` for symmetric positive semidefinite `A` (k x k, flat
/// row-major), dropping columns whose pivot collapses relative to the
/// original diagonal (aliased columns get coefficient zero). Returns the
/// solution and the dropped column indices.
pub fn solve_psd(mut a: Vec<f64>, mut b: Vec<f64>, k: usize) -> (Vec<f64>, Vec<usize>) {
    let mut dropped = Vec::new();
    let diag0: Vec<f64> = (0..k).map(|i| a[i * k + i]).collect();
    for i in 0..k {
        let piv = a[i * k + i];
        let thresh = 1e-10 * diag0[i].abs().max(1e-300);
        if !piv.is_finite() || piv.abs() <= thresh {
            dropped.push(i);
            for j in 0..k {
                a[i * k + j] = 0.0;
                a[j * k + i] = 0.0;
            }
            a[i * k + i] = 1.0;
            b[i] = 0.0;
            continue;
        }
        for r in (i + 1)..k {
            let f = a[r * k + i] / piv;
            if f == 0.0 {
                continue;
            }
            for c in i..k {
                a[r * k + c] -= f * a[i * k + c];
            }
            b[r] -= f * b[i];
        }
    }
    let mut x = vec![0.0; k];
    for i in (0..k).rev() {
        let mut s = b[i];
        for c in (i + 1)..k {
            s -= a[i * k + c] * x[c];
        }
        x[i] = s / a[i * k + i];
    }
    (x, dropped)
}

pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let m = s.len() / 2;
    if s.len() % 2 == 1 {
        s[m]
    } else {
        0.5 * (s[m - 1] + s[m])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_system() {
        // A = [[4,1],[1,3]], b = [1,2] -> x = (1/11, 7/11)
        let (x, dropped) = solve_psd(vec![4.0, 1.0, 1.0, 3.0], vec![1.0, 2.0], 2);
        assert!(dropped.is_empty());
        assert!((x[0] - 1.0 / 11.0).abs() < 1e-12);
        assert!((x[1] - 7.0 / 11.0).abs() < 1e-12);
    }

    #[test]
    fn drops_aliased_column() {
        // second column duplicates the first
        let x = Matrix::from_flat(vec![1.0, 1.0, 2.0, 2.0, 3.0, 3.0], 3, 2);
        let a = x.xtx();
        let b = x.xtwy(&[2.0, 4.0, 6.0], None);
        let (coef, dropped) = solve_psd(a, b, 2);
        assert_eq!(dropped, vec![1]);
        assert!((coef[0] - 2.0).abs() < 1e-10);
        assert_eq!(coef[1], 0.0);
    }

    #[test]
    fn median_even_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
