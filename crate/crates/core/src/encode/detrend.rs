use crate::error::{Error, Result};
use crate::matrixio::{Block, ResponseMatrix};

/// Removes a least-squares line (intercept and slope) from every column,
/// separately within each block.
pub fn detrend_blocks(y: &ResponseMatrix, blocks: &[Block]) -> Result<ResponseMatrix> {
    let n = y.n_scans();
    let mut cursor = 0;
    for (i, b) in blocks.iter().enumerate() {
        if b.start != cursor {
            return Err(Error::invalid(format!(
                "block {i} starts at {} but row {cursor} is next",
                b.start
            )));
        }
        if b.len() < 3 {
            return Err(Error::invalid(format!(
                "block {i} has {} rows; detrending needs at least 3",
                b.len()
            )));
        }
        cursor = b.end;
    }
    if cursor != n {
        return Err(Error::invalid(format!(
            "blocks cover {cursor} rows, response has {n}"
        )));
    }

    let mut out = y.clone();
    for b in blocks {
        let len = b.len() as f64;
        let t_mean = (len - 1.0) / 2.0;
        let t: Vec<f64> = (0..b.len()).map(|i| i as f64 - t_mean).collect();
        let sxx: f64 = t.iter().map(|v| v * v).sum();
        for mut col in out.data.column_iter_mut() {
            let seg = &mut col.as_mut_slice()[b.rows()];
            let mean = seg.iter().sum::<f64>() / len;
            let slope = seg.iter().zip(&t).map(|(v, ti)| (v - mean) * ti).sum::<f64>() / sxx;
            seg.iter_mut().zip(&t).for_each(|(v, ti)| *v -= mean + slope * ti);
        }
    }
    Ok(out)
}
