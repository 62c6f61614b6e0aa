use super::MfModel;
use crate::dataset::{ContextId, ItemId};
use crate::scalar::Scalar;

/// `log(1 + exp(-t))`, evaluated without overflow for large `|t|`.
#[inline]
pub fn surrogate_loss<T: Scalar>(t: T) -> T {
    if t >= T::zero() {
        (-t).exp().ln_1p()
    } else {
        -t + t.exp().ln_1p()
    }
}

/// `d/dt log(1 + exp(-t)) = -1 / (1 + exp(t))`.
#[inline]
pub fn surrogate_loss_derivative<T: Scalar>(t: T) -> T {
    if t >= T::zero() {
        let e = (-t).exp();
        -e / (T::one() + e)
    } else {
        -T::one() / (T::one() + t.exp())
    }
}

/// `L(c, i, j) = l(r_ci - r_cj)`.
pub fn pair_loss<T: Scalar>(model: &MfModel<T>, c: ContextId, i: ItemId, j: ItemId) -> T {
    surrogate_loss(model.score(c, i) - model.score(c, j))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn loss_values() {
        assert_relative_eq!(surrogate_loss(0.0f64), std::f64::consts::LN_2, epsilon = 1e-15);
        assert!(surrogate_loss(50.0f64) < 1e-20);
        assert_relative_eq!(surrogate_loss(-50.0f64), 50.0, epsilon = 1e-12);
        assert_relative_eq!(surrogate_loss(3.0f64), 0.048587, epsilon = 1e-6);
        assert!(surrogate_loss(-1000.0f64).is_finite());
        for t in [-30.0, -2.5, -0.1, 0.0, 0.7, 4.0, 31.0f64] {
            assert_relative_eq!(surrogate_loss(-t), surrogate_loss(t) + t, epsilon = 1e-12);
        }
    }

    #[test]
    fn derivative_matches_central_difference() {
        for t in [-8.0, -1.0, -0.2, 0.0, 0.3, 2.0, 9.0f64] {
            let h = 1e-6;
            let fd = (surrogate_loss(t + h) - surrogate_loss(t - h)) / (2.0 * h);
            assert_relative_eq!(surrogate_loss_derivative(t), fd, max_relative = 1e-7);
        }
        assert_eq!(surrogate_loss_derivative(0.0f64), -0.5);
    }

    #[test]
    fn pair_loss_monotone() {
        let mut m = MfModel::<f64>::zeros(1, 3, 1);
        m.context_row_mut(0)[0] = 1.0;
        m.item_row_mut(0)[0] = 0.5;
        m.item_row_mut(1)[0] = 0.5;
        assert_relative_eq!(pair_loss(&m, 0, 0, 1), std::f64::consts::LN_2, epsilon = 1e-15);
        m.item_row_mut(2)[0] = 0.9;
        let base = pair_loss(&m, 0, 0, 2);
        m.item_row_mut(0)[0] = 0.8;
        assert!(pair_loss(&m, 0, 0, 2) < base);
        m.item_row_mut(2)[0] = 1.5;
        assert!(pair_loss(&m, 0, 0, 2) > base);
    }
}
