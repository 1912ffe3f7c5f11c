use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Mean of `sqrt((pred − gt)² + eps²)`.
pub fn charbonnier_loss(pred: &Tensor, gt: &Tensor, eps: f64) -> Result<f64> {
    if pred.shape() != gt.shape() {
        return Err(Error::invalid(format!("shape mismatch {:?} vs {:?}", pred.shape(), gt.shape())));
    }
    if !(eps > 0.0) {
        return Err(Error::invalid("Charbonnier eps must be positive"));
    }
    if pred.is_empty() {
        return Err(Error::invalid("Charbonnier loss of an empty tensor"));
    }
    let eps2 = eps * eps;
    let sum: f64 = pred
        .data()
        .iter()
        .zip(gt.data())
        .map(|(&a, &b)| {
            let d = a as f64 - b as f64;
            (d * d + eps2).sqrt()
        })
        .sum();
    Ok(sum / pred.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_forms() {
        let a = Tensor::filled(&[2, 3], 0.25);
        assert!((charbonnier_loss(&a, &a, 1e-3).unwrap() - 1e-3).abs() < 1e-15);
        let b = Tensor::filled(&[2, 3], 0.75);
        let d: f64 = 0.5;
        let expect = (d * d + 1e-6).sqrt();
        assert!((charbonnier_loss(&a, &b, 1e-3).unwrap() - expect).abs() < 1e-12);
        assert_eq!(charbonnier_loss(&a, &b, 1e-3).unwrap(), charbonnier_loss(&b, &a, 1e-3).unwrap());
        assert!(charbonnier_loss(&a, &Tensor::zeros(&[6]), 1e-3).is_err());
    }
}
