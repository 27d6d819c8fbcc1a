//! Basis inverse in product form.
//!
//! `B^-1 = T_k ... T_1`, where each `T` is the identity with its pivot column
//! replaced. An eta stores the pivot row, the pivot value and the other
//! nonzeros of the column it eliminated; applying it to `x` sets
//! `x_p /= pivot` and then `x_i -= eta_i * x_p`.

/// Entries smaller than this are not stored.
const DROP_TOL: f64 = 1e-14;

#[derive(Clone, Debug, Default)]
pub(super) struct EtaFile {
    row: Vec<usize>,
    pivot: Vec<f64>,
    start: Vec<usize>,
    idx: Vec<usize>,
    val: Vec<f64>,
}

impl EtaFile {
    pub(super) fn new() -> Self {
        EtaFile {
            start: vec![0],
            ..Default::default()
        }
    }

    pub(super) fn clear(&mut self) {
        self.row.clear();
        self.pivot.clear();
        self.start.truncate(1);
        self.idx.clear();
        self.val.clear();
    }

    #[cfg(test)]
    fn len(&self) -> usize {
        self.row.len()
    }

    /// Appends the eta that maps the dense column `col` to `e_p`. Unit
    /// columns need no eta and are skipped.
    pub(super) fn push(&mut self, p: usize, col: &[f64]) {
        let before = self.idx.len();
        for (i, &v) in col.iter().enumerate() {
            if i != p && v.abs() > DROP_TOL {
                self.idx.push(i);
                self.val.push(v);
            }
        }
        if self.idx.len() == before && col[p] == 1.0 {
            return;
        }
        self.row.push(p);
        self.pivot.push(col[p]);
        self.start.push(self.idx.len());
    }

    /// `x <- B^-1 x`.
    pub(super) fn ftran(&self, x: &mut [f64]) {
        for k in 0..self.row.len() {
            let p = self.row[k];
            if x[p] == 0.0 {
                continue;
            }
            let xp = x[p] / self.pivot[k];
            x[p] = xp;
            for t in self.start[k]..self.start[k + 1] {
                x[self.idx[t]] -= self.val[t] * xp;
            }
        }
    }

    /// `v^T <- v^T B^-1`.
    pub(super) fn btran(&self, v: &mut [f64]) {
        for k in (0..self.row.len()).rev() {
            let p = self.row[k];
            let mut s = v[p];
            for t in self.start[k]..self.start[k + 1] {
                s -= v[self.idx[t]] * self.val[t];
            }
            v[p] = s / self.pivot[k];
        }
    }
}
