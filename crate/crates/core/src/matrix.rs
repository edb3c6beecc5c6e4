use serde::{Deserialize, Serialize};

/// Dense row-major 0/1 matrix (locations x products).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryMatrix {
    nrows: usize,
    ncols: usize,
    data: Vec<u8>,
}

impl BinaryMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            data: vec![0; nrows * ncols],
        }
    }

    pub fn from_fn(nrows: usize, ncols: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut m = Self::zeros(nrows, ncols);
        for r in 0..nrows {
            for c in 0..ncols {
                m.data[r * ncols + c] = f(r, c) as u8;
            }
        }
        m
    }

    pub fn from_rows(rows: &[&[u8]]) -> Self {
        let ncols = rows.first().map_or(0, |r| r.len());
        assert!(rows.iter().all(|r| r.len() == ncols), "ragged rows");
        Self::from_fn(rows.len(), ncols, |r, c| rows[r][c] != 0)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> bool {
        self.data[r * self.ncols + c] != 0
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: bool) {
        self.data[r * self.ncols + c] = v as u8;
    }

    pub fn row(&self, r: usize) -> &[u8] {
        &self.data[r * self.ncols..(r + 1) * self.ncols]
    }

    /// Column indices set in row `r`.
    pub fn row_support(&self, r: usize) -> Vec<usize> {
        self.row(r)
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn row_sum(&self, r: usize) -> usize {
        self.row(r).iter().map(|&v| v as usize).sum()
    }

    pub fn row_sums(&self) -> Vec<usize> {
        (0..self.nrows).map(|r| self.row_sum(r)).collect()
    }

    pub fn col_sums(&self) -> Vec<usize> {
        let mut sums = vec![0; self.ncols];
        for r in 0..self.nrows {
            for (s, &v) in sums.iter_mut().zip(self.row(r)) {
                *s += v as usize;
            }
        }
        sums
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self::from_fn(rows.len(), self.ncols, |r, c| self.get(rows[r], c))
    }

    pub fn select_cols(&self, cols: &[usize]) -> Self {
        Self::from_fn(self.nrows, cols.len(), |r, c| self.get(r, cols[c]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sums() {
        let m = BinaryMatrix::from_rows(&[&[1, 1, 0], &[0, 1, 1], &[1, 1, 1]]);
        assert_eq!(m.row_sums(), vec![2, 2, 3]);
        assert_eq!(m.col_sums(), vec![2, 3, 2]);
        assert_eq!(m.row_support(1), vec![1, 2]);
        assert_eq!(m.select_cols(&[2, 0]).row_sums(), vec![1, 1, 2]);
    }
}
