//! Fixed numeric formatting shared by every CSV writer.

use std::io::Write;

use crate::error::Result;

/// Scientific notation with 12 significant digits; negative zero prints as
/// zero so identical runs give identical bytes.
pub fn fmt_num(x: f64) -> String {
    let x = if x == 0.0 { 0.0 } else { x };
    format!("{x:.11e}")
}

/// Writes a header and rows of numbers as CSV with `\n` line endings.
pub fn write_table<W: Write>(mut w: W, header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<()> {
    writeln!(w, "{}", header.join(","))?;
    for row in rows {
        let cells: Vec<String> = row.into_iter().map(fmt_num).collect();
        writeln!(w, "{}", cells.join(","))?;
    }
    Ok(())
}
