use crate::error::{CcnlError, Result};

/// Dense row-major tensor of f64 values.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "shape {:?} does not match data length {}",
            shape,
            data.len()
        );
        Tensor { shape, data }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    pub fn scalar(x: f64) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![x],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Tensor::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Tensor {
            shape: vec![r, c],
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn rows(&self) -> usize {
        assert_eq!(self.rank(), 2);
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        assert_eq!(self.rank(), 2);
        self.shape[1]
    }

    pub fn at2(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.shape[1] + j]
    }

    pub fn set2(&mut self, i: usize, j: usize, x: f64) {
        self.data[i * self.shape[1] + j] = x;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.shape[1];
        &self.data[i * c..(i + 1) * c]
    }

    pub fn reshape(&self, shape: Vec<usize>) -> Tensor {
        assert_eq!(shape.iter().product::<usize>(), self.data.len());
        Tensor {
            shape,
            data: self.data.clone(),
        }
    }

    pub fn transpose(&self) -> Tensor {
        assert_eq!(self.rank(), 2);
        let (m, n) = (self.shape[0], self.shape[1]);
        let mut out = Tensor::zeros(&[n, m]);
        for i in 0..m {
            for j in 0..n {
                out.data[j * m + i] = self.data[i * n + j];
            }
        }
        out
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn fill(&mut self, x: f64) {
        self.data.iter_mut().for_each(|v| *v = x);
    }

    /// Accumulate `other` into self (same shape).
    pub fn add_assign(&mut self, other: &Tensor) {
        assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }
}

/// Matrix product of two rank-2 tensors.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows() {
        return Err(CcnlError::DimensionMismatch {
            context: "matmul".into(),
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    let (m, k, n) = (a.rows(), a.cols(), b.cols());
    let mut out = Tensor::zeros(&[m, n]);
    // i-k-j loop order keeps the inner accesses contiguous.
    for i in 0..m {
        for p in 0..k {
            let av = a.data[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b.data[p * n..(p + 1) * n];
            let orow = &mut out.data[i * n..(i + 1) * n];
            for j in 0..n {
                orow[j] += av * brow[j];
            }
        }
    }
    Ok(out)
}

/// Numerically stabilized softmax along `axis` of a rank-1 or rank-2 tensor.
pub fn softmax(x: &Tensor, axis: usize) -> Tensor {
    assert!(axis < x.rank(), "axis {} out of range for rank {}", axis, x.rank());
    match x.rank() {
        1 => {
            let mut out = x.clone();
            softmax_lane(&mut out.data);
            out
        }
        2 => {
            let (m, n) = (x.shape[0], x.shape[1]);
            let mut out = x.clone();
            if axis == 1 {
                for i in 0..m {
                    softmax_lane(&mut out.data[i * n..(i + 1) * n]);
                }
            } else {
                for j in 0..n {
                    let mut lane: Vec<f64> = (0..m).map(|i| out.data[i * n + j]).collect();
                    softmax_lane(&mut lane);
                    for i in 0..m {
                        out.data[i * n + j] = lane[i];
                    }
                }
            }
            out
        }
        r => panic!("softmax unsupported for rank {}", r),
    }
}

fn softmax_lane(lane: &mut [f64]) {
    let max = lane.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in lane.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in lane.iter_mut() {
        *v /= sum;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_identity() {
        let m = Tensor::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0], vec![7.0, 8.0, 9.0]]);
        let r = matmul(&Tensor::identity(3), &m).unwrap();
        assert_eq!(r, m);
    }

    #[test]
    fn matmul_hand_example() {
        let a = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        let b = Tensor::from_rows(&[vec![0.0], vec![1.0]]);
        let r = matmul(&a, &b).unwrap();
        assert_eq!(r.data(), &[2.0, 4.0]);
        assert_eq!(r.shape(), &[2, 1]);
    }

    #[test]
    fn matmul_zeros() {
        let a = Tensor::zeros(&[2, 3]);
        let b = Tensor::from_rows(&[vec![1.0; 4], vec![2.0; 4], vec![3.0; 4]]);
        let r = matmul(&a, &b).unwrap();
        assert_eq!(r, Tensor::zeros(&[2, 4]));
    }

    #[test]
    fn matmul_shape_mismatch() {
        let a = Tensor::zeros(&[2, 3]);
        let b = Tensor::zeros(&[4, 2]);
        let err = matmul(&a, &b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]") && msg.contains("[4, 2]"), "{msg}");
    }

    #[test]
    fn softmax_uniform() {
        let r = softmax(&Tensor::new(vec![3], vec![0.0, 0.0, 0.0]), 0);
        for v in r.data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_large_values_no_overflow() {
        let r = softmax(&Tensor::new(vec![2], vec![1000.0, 1000.0]), 0);
        assert!(r.all_finite());
        assert!((r.data()[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn softmax_closed_form() {
        let r = softmax(&Tensor::new(vec![2], vec![0.0, 3.0f64.ln()]), 0);
        assert!((r.data()[0] - 0.25).abs() < 1e-12);
        assert!((r.data()[1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn softmax_axis0_columns() {
        let x = Tensor::from_rows(&[vec![0.0, 1.0], vec![0.0, 1.0]]);
        let r = softmax(&x, 0);
        for v in r.data() {
            assert!((v - 0.5).abs() < 1e-15);
        }
    }
}
