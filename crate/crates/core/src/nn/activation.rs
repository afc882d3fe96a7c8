use super::Tensor;

pub fn sigmoid_scalar(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid(x: &Tensor) -> Tensor {
    map(x, sigmoid_scalar)
}

/// Backward of [`sigmoid`] given its output `y`.
pub fn sigmoid_backward(y: &Tensor, dy: &Tensor) -> Tensor {
    zip(y, dy, |s, g| g * s * (1.0 - s))
}

pub fn relu(x: &Tensor) -> Tensor {
    map(x, |v| v.max(0.0))
}

/// Backward of [`relu`] given its input `x`.
pub fn relu_backward(x: &Tensor, dy: &Tensor) -> Tensor {
    zip(x, dy, |v, g| if v > 0.0 { g } else { 0.0 })
}

fn map(x: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    Tensor::new(x.shape(), x.data.iter().map(|&v| f(v)).collect()).expect("same length")
}

fn zip(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    debug_assert_eq!(a.len(), b.len());
    Tensor::new(a.shape(), a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect()).expect("same length")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_of_zero_is_half() {
        assert_eq!(sigmoid_scalar(0.0), 0.5);
        assert!(sigmoid_scalar(-800.0) >= 0.0);
        assert!(sigmoid_scalar(800.0) <= 1.0);
    }

    #[test]
    fn relu_definition() {
        let x = Tensor::new(&[4], vec![-2.0, -0.5, 0.0, 3.0]).unwrap();
        assert_eq!(relu(&x).data, vec![0.0, 0.0, 0.0, 3.0]);
    }
}
