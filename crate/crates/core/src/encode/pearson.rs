use crate::error::{Error, Result};

/// A correlation coefficient, or a flagged placeholder of 0 when either
/// input has no variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correlation {
    pub r: f64,
    pub defined: bool,
}

impl Correlation {
    pub const UNDEFINED: Correlation = Correlation {
        r: 0.0,
        defined: false,
    };
}

/// Sample Pearson correlation, computed from centered sums.
pub fn pearson(y_true: &[f64], y_pred: &[f64]) -> Result<Correlation> {
    if y_true.len() != y_pred.len() {
        return Err(Error::shape(format!(
            "pearson inputs have lengths {} and {}",
            y_true.len(),
            y_pred.len()
        )));
    }
    if y_true.len() < 3 {
        return Err(Error::invalid(format!(
            "pearson needs at least 3 samples, got {}",
            y_true.len()
        )));
    }
    Ok(pearson_unchecked(y_true, y_pred))
}

pub(crate) fn pearson_unchecked(a: &[f64], b: &[f64]) -> Correlation {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    // Spreads at rounding level relative to the mean count as constant.
    let flat = |s: f64, m: f64| s <= (1e-14 * m.abs()).powi(2) * n || s == 0.0;
    if flat(saa, ma) || flat(sbb, mb) {
        return Correlation::UNDEFINED;
    }
    Correlation {
        r: (sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0),
        defined: true,
    }
}
