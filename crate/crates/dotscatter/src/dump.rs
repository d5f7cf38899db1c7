//! Binary wavefunction dump: a text header terminated by `end_header\n`,
//! then `psi` as little-endian complex128 pairs (re, im), `x₁` slowest.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use dotscatter_core::{ScatteringSolution, C64};

use crate::error::{CliError, Result};

pub const MAGIC: &str = "# dotscatter psi v1";

pub fn write_psi(path: &Path, sol: &ScatteringSolution, window_nodes: usize, bound_dims: usize) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{MAGIC}")?;
    writeln!(w, "n_slices = {}", sol.n_slices)?;
    writeln!(w, "transverse_len = {}", sol.transverse_len)?;
    writeln!(w, "window_nodes = {window_nodes}")?;
    writeln!(w, "bound_coordinates = {bound_dims}")?;
    writeln!(w, "spacing_nm = {}", sol.spacing)?;
    writeln!(w, "total_energy_meV = {}", sol.total_energy)?;
    writeln!(w, "T0_meV = {}", sol.incident_kinetic)?;
    writeln!(w, "incident_channel = {}", sol.incident_channel)?;
    writeln!(w, "layout = row-major, x1 slowest, little-endian complex128")?;
    writeln!(w, "end_header")?;
    for z in &sol.psi {
        w.write_all(&z.re.to_le_bytes())?;
        w.write_all(&z.im.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Header lines (without the magic and terminator) and the data.
pub fn read_psi(path: &Path) -> Result<(Vec<String>, Vec<C64>)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut header = Vec::new();
    let mut line = String::new();
    r.read_line(&mut line)?;
    if line.trim_end() != MAGIC {
        return Err(CliError::Config(format!("{} is not a psi dump", path.display())));
    }
    loop {
        line.clear();
        if r.read_line(&mut line)? == 0 {
            return Err(CliError::Config("psi dump header is not terminated".into()));
        }
        if line.trim_end() == "end_header" {
            break;
        }
        header.push(line.trim_end().to_string());
    }
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let psi = bytes
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().expect("8 bytes"));
            let im = f64::from_le_bytes(c[8..].try_into().expect("8 bytes"));
            C64::new(re, im)
        })
        .collect();
    Ok((header, psi))
}
