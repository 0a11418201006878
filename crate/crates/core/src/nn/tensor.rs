/// Dense `[channels, depth, height, width]` array; 2D data uses `depth = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: [usize; 4],
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: [usize; 4]) -> Self {
        Self { shape, data: vec![0.0; shape.iter().product()] }
    }

    pub fn from_vec(shape: [usize; 4], data: Vec<f64>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), data.len(), "tensor shape does not match data");
        Self { shape, data }
    }

    pub fn channels(&self) -> usize {
        self.shape[0]
    }

    /// Voxels per channel.
    pub fn plane(&self) -> usize {
        self.shape[1] * self.shape[2] * self.shape[3]
    }

    pub fn spatial(&self) -> [usize; 3] {
        [self.shape[1], self.shape[2], self.shape[3]]
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let p = self.plane();
        &self.data[c * p..(c + 1) * p]
    }

    /// Stacks channels of `a` followed by those of `b`.
    pub fn concat(a: &Tensor, b: &Tensor) -> Tensor {
        assert_eq!(a.spatial(), b.spatial());
        let mut data = Vec::with_capacity(a.data.len() + b.data.len());
        data.extend_from_slice(&a.data);
        data.extend_from_slice(&b.data);
        Tensor { shape: [a.shape[0] + b.shape[0], a.shape[1], a.shape[2], a.shape[3]], data }
    }

    /// Inverse of [`Tensor::concat`]: splits after the first `ca` channels.
    pub fn split(&self, ca: usize) -> (Tensor, Tensor) {
        let p = self.plane();
        let [c, d, h, w] = self.shape;
        (
            Tensor { shape: [ca, d, h, w], data: self.data[..ca * p].to_vec() },
            Tensor { shape: [c - ca, d, h, w], data: self.data[ca * p..].to_vec() },
        )
    }
}
