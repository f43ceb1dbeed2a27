//! Grid functions as CSV: one row per node, `x1[,x2],value`.

use std::path::Path;

use shiftdp::problem::{Grid, GridFunction};

use crate::CliError;

/// Writes every coordinate and value with 17 significant digits, so reading
/// the file back is lossless.
pub fn write(path: &Path, psi: &GridFunction) -> Result<(), CliError> {
    let grid = psi.grid();
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Csv(path.into(), e))?;
    let mut header: Vec<String> = (1..=grid.dim()).map(|d| format!("x{d}")).collect();
    header.push("value".into());
    w.write_record(&header).map_err(|e| CliError::Csv(path.into(), e))?;
    for (i, v) in psi.values().iter().enumerate() {
        let mut row: Vec<String> = grid.node(i).iter().map(|x| format!("{x:.16e}")).collect();
        row.push(format!("{v:.16e}"));
        w.write_record(&row).map_err(|e| CliError::Csv(path.into(), e))?;
    }
    w.flush().map_err(|e| CliError::Io(path.into(), e))
}

/// Reads a CSV written by [`write`] onto `grid`. Rows must list the nodes in
/// grid order.
pub fn read(path: &Path, grid: &std::sync::Arc<Grid>) -> Result<GridFunction, CliError> {
    let bad = |msg: String| CliError::PsiFile(path.into(), msg);
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::Csv(path.into(), e))?;
    let width = r.headers().map_err(|e| CliError::Csv(path.into(), e))?.len();
    if width != grid.dim() + 1 {
        return Err(bad(format!("expected {} columns, found {width}", grid.dim() + 1)));
    }
    let mut values = Vec::with_capacity(grid.len());
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Csv(path.into(), e))?;
        if i >= grid.len() {
            return Err(bad(format!("more rows than the {} grid nodes", grid.len())));
        }
        let nums = rec
            .iter()
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| bad(format!("row {}: {e}", i + 1)))?;
        let node = grid.node(i);
        for (x, y) in node.iter().zip(&nums) {
            if (x - y).abs() > 1e-9 * (1.0 + x.abs()) {
                return Err(bad(format!("row {} is at {:?}, grid node is {node:?}", i + 1, &nums[..grid.dim()])));
            }
        }
        values.push(nums[grid.dim()]);
    }
    if values.len() != grid.len() {
        return Err(bad(format!("{} rows for {} grid nodes", values.len(), grid.len())));
    }
    Ok(GridFunction::new(grid.clone(), values))
}
