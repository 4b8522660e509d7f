//! Integer label maps: binary building masks and damage-class masks.

use crate::error::{Error, Result};
use crate::tensor::{numel, Element, Tensor};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    shape: Vec<usize>,
    data: Vec<u8>,
}

impl Mask {
    pub fn new(shape: &[usize], data: Vec<u8>) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::Input(format!("mask shape {shape:?} must be non-empty")));
        }
        if numel(shape) != data.len() {
            return Err(Error::Input(format!(
                "mask shape {shape:?} needs {} labels, got {}",
                numel(shape),
                data.len()
            )));
        }
        Ok(Self { shape: shape.to_vec(), data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::new(shape, vec![0; numel(shape)]).expect("valid mask shape")
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Fails with an input error naming `what` if any label exceeds `max`.
    pub fn check_max(&self, max: u8, what: &str) -> Result<()> {
        match self.data.iter().position(|&v| v > max) {
            Some(i) => Err(Error::Input(format!("{what}: label {} at index {i} is outside 0..={max}", self.data[i]))),
            None => Ok(()),
        }
    }

    pub fn to_tensor<T: Element>(&self) -> Tensor<T> {
        let data = self.data.iter().map(|&v| T::of(v as f64)).collect();
        Tensor::new(&self.shape, data).expect("mask shape is valid")
    }

    /// Rounds each value to the nearest label; used for u8 rasters stored as tensors.
    pub fn from_tensor<T: Element>(t: &Tensor<T>) -> Result<Self> {
        let data = t
            .data()
            .iter()
            .map(|&v| {
                let f = v.as_f64();
                if (0.0..=255.0).contains(&f) && f.fract() == 0.0 {
                    Ok(f as u8)
                } else {
                    Err(Error::Input(format!("value {f} is not a mask label")))
                }
            })
            .collect::<Result<_>>()?;
        Self::new(t.shape(), data)
    }

    /// Slice `index` along the first axis.
    pub fn index_outer(&self, index: usize) -> Self {
        let inner = numel(&self.shape[1..]);
        let data = self.data[index * inner..(index + 1) * inner].to_vec();
        Self { shape: self.shape[1..].to_vec(), data }
    }

    /// Stacks equal-shaped masks along a new leading axis.
    pub fn stack(items: &[Mask]) -> Result<Self> {
        let first = items.first().ok_or_else(|| Error::Input("cannot stack zero masks".into()))?;
        let mut data = Vec::with_capacity(first.len() * items.len());
        for m in items {
            if m.shape != first.shape {
                return Err(Error::shape("stack", &first.shape, &m.shape));
            }
            data.extend_from_slice(&m.data);
        }
        let mut shape = vec![items.len()];
        shape.extend_from_slice(&first.shape);
        Self::new(&shape, data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stack_and_index_round_trip() {
        let a = Mask::new(&[2, 2], vec![0, 1, 2, 3]).unwrap();
        let b = Mask::new(&[2, 2], vec![4, 3, 2, 1]).unwrap();
        let s = Mask::stack(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(s.shape(), &[2, 2, 2]);
        assert_eq!(s.index_outer(0), a);
        assert_eq!(s.index_outer(1), b);
    }

    #[test]
    fn check_max_reports_offender() {
        let m = Mask::new(&[3], vec![0, 5, 1]).unwrap();
        assert!(m.check_max(4, "dam").unwrap_err().to_string().contains("index 1"));
        assert!(m.check_max(5, "dam").is_ok());
    }

    #[test]
    fn tensor_conversion() {
        let m = Mask::new(&[2], vec![0, 4]).unwrap();
        let t: Tensor<f32> = m.to_tensor();
        assert_eq!(Mask::from_tensor(&t).unwrap(), m);
        let bad = Tensor::<f32>::new(&[1], vec![0.5]).unwrap();
        assert!(Mask::from_tensor(&bad).is_err());
    }
}
