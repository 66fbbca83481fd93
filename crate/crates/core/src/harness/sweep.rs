//! Grids of experiments over temperatures, the confidence scale and seeds.
//!
//! Cells are numbered in row-major order over the axes as listed, the last
//! axis varying fastest. Cell `i` runs with seed `s + i`, where `s` is the
//! cell's `seeds` coordinate, or the base config's seed when the grid has
//! no `seeds` axis. Cells share nothing, so running them in parallel gives
//! the same results as running them in order.

use std::io::Write;

use rayon::prelude::*;

use crate::config::{parse_list, parse_real, Document};
use crate::{Error, Result};

use super::output::{real, record_fields, CSV_HEADER};
use super::settings::real_text;
use super::{run_experiment, ExperimentConfig, RegretRecord};

#[derive(Debug, Clone, PartialEq)]
pub enum SweepAxis {
    AlphaL(Vec<f64>),
    AlphaF(Vec<f64>),
    C1(Vec<f64>),
    Seeds(Vec<u64>),
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::AlphaL(_) => "alpha_l",
            SweepAxis::AlphaF(_) => "alpha_f",
            SweepAxis::C1(_) => "c1",
            SweepAxis::Seeds(_) => "master_seed",
        }
    }

    pub fn len(&self) -> usize {
        match self {
            SweepAxis::AlphaL(v) | SweepAxis::AlphaF(v) | SweepAxis::C1(v) => v.len(),
            SweepAxis::Seeds(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn apply(&self, i: usize, config: &mut ExperimentConfig) -> String {
        match self {
            SweepAxis::AlphaL(v) => {
                config.alpha_l = Some(v[i]);
                real_text(v[i])
            }
            SweepAxis::AlphaF(v) => {
                config.alpha_f = Some(v[i]);
                real_text(v[i])
            }
            SweepAxis::C1(v) => {
                config.c1 = v[i];
                config.beta = None;
                real_text(v[i])
            }
            SweepAxis::Seeds(v) => {
                config.seed = v[i];
                v[i].to_string()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepGrid {
    pub axes: Vec<SweepAxis>,
    pub parallel: bool,
}

impl SweepGrid {
    /// Reads the `[sweep]` section; absent keys are absent axes.
    pub fn from_document(doc: &Document) -> Result<Self> {
        let mut grid = SweepGrid { axes: Vec::new(), parallel: true };
        let Some(section) = doc.section("sweep") else {
            return Ok(grid);
        };
        for e in &section.entries {
            let axis = match e.key.as_str() {
                "alpha_l" => SweepAxis::AlphaL(parse_list(e, parse_real)?),
                "alpha_f" => SweepAxis::AlphaF(parse_list(e, parse_real)?),
                "c1" => SweepAxis::C1(parse_list(e, parse_real)?),
                "seeds" => SweepAxis::Seeds(parse_list(e, |e| e.parse())?),
                "parallel" => {
                    grid.parallel = e.parse()?;
                    continue;
                }
                other => {
                    return Err(Error::Parse {
                        line: e.line,
                        msg: format!("unknown sweep axis `{other}`"),
                    })
                }
            };
            if axis.is_empty() {
                return Err(Error::Parse { line: e.line, msg: format!("empty axis `{}`", e.key) });
            }
            grid.axes.push(axis);
        }
        Ok(grid)
    }

    pub fn num_cells(&self) -> usize {
        self.axes.iter().map(SweepAxis::len).product()
    }

    /// Config and coordinates of cell `index`.
    pub fn cell(&self, base: &ExperimentConfig, index: usize) -> (ExperimentConfig, Vec<(String, String)>) {
        let mut config = base.clone();
        let mut coords = Vec::with_capacity(self.axes.len());
        let mut rest = index;
        let mut digits = vec![0; self.axes.len()];
        for (slot, axis) in self.axes.iter().enumerate().rev() {
            digits[slot] = rest % axis.len();
            rest /= axis.len();
        }
        for (axis, &i) in self.axes.iter().zip(&digits) {
            coords.push((axis.name().to_string(), axis.apply(i, &mut config)));
        }
        config.seed = config.seed.wrapping_add(index as u64);
        // cells never share output files
        config.output = None;
        config.checkpoint = None;
        (config, coords)
    }
}

#[derive(Debug)]
pub struct SweepCell {
    pub index: usize,
    pub coords: Vec<(String, String)>,
    pub seed: u64,
    /// A failed cell keeps its error; the others still run.
    pub outcome: Result<Vec<RegretRecord>>,
}

pub fn run_sweep(base: &ExperimentConfig, grid: &SweepGrid) -> Vec<SweepCell> {
    let run_cell = |index: usize| {
        let (config, coords) = grid.cell(base, index);
        SweepCell {
            index,
            coords,
            seed: config.seed,
            outcome: run_experiment(&config),
        }
    };
    let n = grid.num_cells();
    if grid.parallel {
        (0..n).into_par_iter().map(run_cell).collect()
    } else {
        (0..n).map(run_cell).collect()
    }
}

/// Aggregated trace of every successful cell, prefixed with `cell`, the
/// grid coordinates and the run seed.
pub fn write_sweep_csv<W: Write>(cells: &[SweepCell], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let axis_names: Vec<String> = cells
        .first()
        .map(|c| c.coords.iter().map(|(n, _)| n.clone()).collect())
        .unwrap_or_default();
    let mut header = vec!["cell".to_string()];
    header.extend(axis_names);
    header.push("run_seed".into());
    header.extend(CSV_HEADER.iter().map(|s| s.to_string()));
    w.write_record(&header).map_err(to_error)?;
    for cell in cells {
        let Ok(records) = &cell.outcome else { continue };
        for r in records {
            let mut row = vec![cell.index.to_string()];
            row.extend(cell.coords.iter().map(|(_, v)| v.clone()));
            row.push(cell.seed.to_string());
            row.extend(record_fields(r));
            w.write_record(&row).map_err(to_error)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// One line per cell: coordinates, status and final cumulative regrets.
pub fn write_sweep_summary<W: Write>(cells: &[SweepCell], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["cell".to_string()];
    if let Some(c) = cells.first() {
        header.extend(c.coords.iter().map(|(n, _)| n.clone()));
    }
    header.extend(["run_seed", "status", "leader_cum", "follower_cum", "error"].map(String::from));
    w.write_record(&header).map_err(to_error)?;
    for cell in cells {
        let mut row = vec![cell.index.to_string()];
        row.extend(cell.coords.iter().map(|(_, v)| v.clone()));
        row.push(cell.seed.to_string());
        match &cell.outcome {
            Ok(records) => {
                let last = records.last();
                row.push("ok".into());
                row.push(real(last.map_or(0.0, |r| r.leader_cum)));
                row.push(real(last.map_or(0.0, |r| r.follower_cum)));
                row.push(String::new());
            }
            Err(e) => {
                row.push(e.class().into());
                row.push(String::new());
                row.push(String::new());
                row.push(e.to_string());
            }
        }
        w.write_record(&row).map_err(to_error)?;
    }
    w.flush()?;
    Ok(())
}

fn to_error(e: csv::Error) -> Error {
    Error::InvalidArgument(format!("csv output: {e}"))
}
