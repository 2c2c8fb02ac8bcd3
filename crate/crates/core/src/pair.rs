use crate::error::{CvmError, Result};

/// Two PIT-transformed samples of equal length, every entry in `(0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitPair {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl UnitPair {
    pub fn new(u: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if u.len() != v.len() {
            return Err(CvmError::LengthMismatch {
                u: u.len(),
                v: v.len(),
            });
        }
        check_open_unit(&u)?;
        check_open_unit(&v)?;
        Ok(Self { u, v })
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }
}

pub(crate) fn check_open_unit(x: &[f64]) -> Result<()> {
    match x.iter().position(|&v| !(v > 0.0 && v < 1.0)) {
        Some(index) => Err(CvmError::OutsideUnitInterval {
            index,
            value: x[index],
        }),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_boundary_and_mismatch() {
        assert!(UnitPair::new(vec![0.2, 0.5], vec![0.3]).is_err());
        assert!(UnitPair::new(vec![0.0, 0.5], vec![0.3, 0.4]).is_err());
        assert!(UnitPair::new(vec![0.1, 0.5], vec![0.3, f64::NAN]).is_err());
        assert!(UnitPair::new(vec![0.1, 0.5], vec![0.3, 0.4]).is_ok());
    }
}
