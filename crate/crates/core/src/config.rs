//! Run configuration (flat `key = value` text), CSV rendering for reports
//! and the fixture figure, and the gnuplot companion script.
//!
//! Numbers render with 17 significant digits and '.' decimals, so equal
//! results are equal bytes.

use crate::bounds::dub_for_block;
use crate::engine::{EstimatorConfig, PathSelect};
use crate::error::{Error, Result};
use crate::fixtures;
use crate::indices::{dsi, full_report, IndexReport};
use crate::input::{build_input_spec, register_builtin_model, GaussianInputSpec, ModelHandle};

/// Everything a report run needs, parsed from config text.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub model: String,
    pub params: Vec<f64>,
    pub mean: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
    pub estimator: EstimatorConfig,
    pub psd_tolerance: f64,
    pub out: Option<String>,
}

fn parse_f64(line: usize, key: &str, v: &str) -> Result<f64> {
    v.trim().parse().map_err(|_| Error::ConfigParse {
        line,
        msg: format!("{key}: expected a number, got '{}'", v.trim()),
    })
}

fn parse_usize(line: usize, key: &str, v: &str) -> Result<usize> {
    v.trim().parse().map_err(|_| Error::ConfigParse {
        line,
        msg: format!("{key}: expected a nonnegative integer, got '{}'", v.trim()),
    })
}

fn parse_bool(line: usize, key: &str, v: &str) -> Result<bool> {
    match v.trim() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => Err(Error::ConfigParse {
            line,
            msg: format!("{key}: expected true or false, got '{other}'"),
        }),
    }
}

fn parse_vec(line: usize, key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',')
        .map(|s| parse_f64(line, key, s))
        .collect()
}

/// Parses the flat config format:
///
/// ```text
/// model = linear
/// params = 1,1,1
/// mean = 0,0,0
/// cov.row.1 = 2,2,2
/// cov.row.2 = 2,8,4
/// cov.row.3 = 2,4,8
/// m = 10000
/// seed = 42
/// ```
///
/// Keys: `model`, `params`, `mean`, `cov.row.N` (1-based, one per row),
/// sizes `m`, `ni`, `no`, `nv`, `nperm`, `seed`, `antithetic`, flags
/// `exact_only` / `mc_only`, `threads`, `psd_tolerance`, `out`. Lines
/// starting with `#` and blank lines are skipped. Errors carry the
/// offending line number.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut model: Option<String> = None;
    let mut params: Option<Vec<f64>> = None;
    let mut mean: Option<Vec<f64>> = None;
    let mut cov_rows: Vec<(usize, usize, Vec<f64>)> = Vec::new(); // (line, 1-based idx, row)
    let mut est = EstimatorConfig::default();
    let mut exact_only = false;
    let mut mc_only = false;
    let mut psd_tolerance = 1e-10;
    let mut out = None;

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (key, value) = trimmed.split_once('=').ok_or_else(|| Error::ConfigParse {
            line,
            msg: format!("expected 'key = value', got '{trimmed}'"),
        })?;
        let key = key.trim();
        let value = value.trim();
        if let Some(idx) = key.strip_prefix("cov.row.") {
            let n: usize = idx.parse().map_err(|_| Error::ConfigParse {
                line,
                msg: format!("cov.row index must be a positive integer, got '{idx}'"),
            })?;
            if n == 0 {
                return Err(Error::ConfigParse {
                    line,
                    msg: "cov.row indices are 1-based".into(),
                });
            }
            cov_rows.push((line, n, parse_vec(line, key, value)?));
            continue;
        }
        match key {
            "model" => model = Some(value.to_string()),
            "params" => params = Some(parse_vec(line, key, value)?),
            "mean" => mean = Some(parse_vec(line, key, value)?),
            "m" => est.m = parse_usize(line, key, value)?,
            "ni" | "n_inner" => est.n_inner = parse_usize(line, key, value)?,
            "no" | "n_outer" => est.n_outer = parse_usize(line, key, value)?,
            "nv" | "n_var" => est.n_var = parse_usize(line, key, value)?,
            "nperm" | "n_perm" => est.n_perm = parse_usize(line, key, value)?,
            "seed" => {
                est.seed = value.parse().map_err(|_| Error::ConfigParse {
                    line,
                    msg: format!("seed: expected an integer, got '{value}'"),
                })?
            }
            "antithetic" => est.antithetic = parse_bool(line, key, value)?,
            "exact_only" => exact_only = parse_bool(line, key, value)?,
            "mc_only" => mc_only = parse_bool(line, key, value)?,
            "threads" => est.threads = Some(parse_usize(line, key, value)?),
            "psd_tolerance" => psd_tolerance = parse_f64(line, key, value)?,
            "out" => out = Some(value.to_string()),
            other => {
                return Err(Error::ConfigParse {
                    line,
                    msg: format!("unknown key '{other}'"),
                })
            }
        }
    }

    let model = model.ok_or(Error::ConfigParse { line: 0, msg: "missing key 'model'".into() })?;
    let params =
        params.ok_or(Error::ConfigParse { line: 0, msg: "missing key 'params'".into() })?;
    let d = params.len();
    let mean = mean.unwrap_or_else(|| vec![0.0; d]);
    if mean.len() != d {
        return Err(Error::ConfigParse {
            line: 0,
            msg: format!("mean has {} entries, params imply {d}", mean.len()),
        });
    }
    if exact_only && mc_only {
        return Err(Error::ConfigParse {
            line: 0,
            msg: "exact_only and mc_only are mutually exclusive".into(),
        });
    }
    est.path = if exact_only {
        PathSelect::Exact
    } else if mc_only {
        PathSelect::Mc
    } else {
        PathSelect::Auto
    };

    let mut cov = vec![Vec::new(); d];
    let mut seen = vec![false; d];
    for (line, n, row) in cov_rows {
        if n > d {
            return Err(Error::ConfigParse {
                line,
                msg: format!("cov.row.{n} out of range for {d} inputs"),
            });
        }
        if seen[n - 1] {
            return Err(Error::ConfigParse { line, msg: format!("cov.row.{n} given twice") });
        }
        if row.len() != d {
            return Err(Error::ConfigParse {
                line,
                msg: format!("cov.row.{n} has {} entries, need {d}", row.len()),
            });
        }
        seen[n - 1] = true;
        cov[n - 1] = row;
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::ConfigParse {
            line: 0,
            msg: format!("missing cov.row.{}", missing + 1),
        });
    }
    Ok(RunConfig { model, params, mean, cov, estimator: est, psd_tolerance, out })
}

/// Instantiates the model and input spec a parsed config describes.
pub fn build_run(run: &RunConfig) -> Result<(ModelHandle, GaussianInputSpec)> {
    let model = register_builtin_model(&run.model, &run.params)?;
    let spec = build_input_spec(&run.mean, &run.cov, run.psd_tolerance)?;
    model.ensure_arity(spec.dim())?;
    Ok((model, spec))
}

pub const REPORT_HEADER: &str =
    "input,DS,DS_T,Sh,S,S_T,DUB,DUB_prime,stderr_DS,stderr_DST,stderr_Sh,n_evals";

fn cell(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt_cell(v: Option<f64>) -> String {
    v.map(cell).unwrap_or_default()
}

/// Renders a report as CSV: one row per input (1-based), empty cells where
/// a column does not apply.
pub fn render_report_csv(rep: &IndexReport) -> String {
    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    for row in &rep.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            row.input + 1,
            cell(row.ds.value),
            cell(row.ds_t.value),
            cell(row.sh.value),
            opt_cell(row.s.map(|v| v.value)),
            opt_cell(row.s_t.map(|v| v.value)),
            opt_cell(row.dub),
            opt_cell(row.dub_prime),
            cell(row.ds.std_error),
            cell(row.ds_t.std_error),
            cell(row.sh.std_error),
            row.n_evals,
        ));
    }
    out
}

/// Runs the report described by config text and renders it.
pub fn run_report(text: &str) -> Result<(IndexReport, String)> {
    let run = parse_config(text)?;
    let (model, spec) = build_run(&run)?;
    let rep = full_report(&model, &spec, &run.estimator)?;
    let csv = render_report_csv(&rep);
    Ok((rep, csv))
}

/// One row of the fixture figure: a correlation set, an input, its indices,
/// and the block bound.
#[derive(Debug, Clone)]
pub struct FigureRow {
    pub set_label: &'static str,
    pub input: usize,
    pub ds: f64,
    pub ds_t: f64,
    pub dub: f64,
}

/// Computes the 30 fixture rows: ten correlation sets over three inputs
/// with unit coefficients and variances (2, 8, 8). Indices follow the
/// detected partition; the bound column treats the three inputs as one
/// dependent block for every set so a single formula spans all rows.
pub fn figure1_rows(cfg: &EstimatorConfig) -> Result<Vec<FigureRow>> {
    let model = register_builtin_model("linear", &[1.0, 1.0, 1.0])?;
    let mut rows = Vec::with_capacity(30);
    for (k, rho) in fixtures::correlation_sets().iter().enumerate() {
        let spec = build_input_spec(&[0.0; 3], &fixtures::covariance(*rho), 1e-10)?;
        for j in 0..3 {
            let (ds, ds_t) = dsi(&model, &spec, j, cfg)?;
            let dub = dub_for_block(&model, &spec, &[0, 1, 2], j, cfg)?;
            rows.push(FigureRow {
                set_label: fixtures::SET_LABELS[k],
                input: j,
                ds: ds.value,
                ds_t: ds_t.value,
                dub: dub.value,
            });
        }
    }
    Ok(rows)
}

pub const FIGURE_HEADER: &str = "set,input,DS,DS_T,DUB";

pub fn render_figure1_csv(rows: &[FigureRow]) -> String {
    let mut out = String::from(FIGURE_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.set_label,
            r.input + 1,
            cell(r.ds),
            cell(r.ds_t),
            cell(r.dub)
        ));
    }
    out
}

/// A gnuplot script that plots the figure CSV written next to it.
pub fn gnuplot_companion(csv_name: &str) -> String {
    format!(
        "set datafile separator ','\n\
         set key outside\n\
         set xlabel 'row (set x input)'\n\
         set ylabel 'index value'\n\
         set xtics rotate by -45\n\
         plot '{csv_name}' every ::1 using 0:3 with points pt 7 title 'DS', \\\n\
         \x20    '' every ::1 using 0:4 with points pt 5 title 'DS_T', \\\n\
         \x20    '' every ::1 using 0:5 with points pt 9 title 'DUB'\n"
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = "\
# three correlated inputs
model = linear
params = 1,1,1
mean = 0,0,0
cov.row.1 = 2,2,2
cov.row.2 = 2,8,4
cov.row.3 = 2,4,8
m = 500
ni = 64
no = 64
nv = 500
seed = 7
";

    #[test]
    fn parses_and_builds() {
        let run = parse_config(GOOD).unwrap();
        assert_eq!(run.model, "linear");
        assert_eq!(run.estimator.m, 500);
        assert_eq!(run.estimator.seed, 7);
        let (model, spec) = build_run(&run).unwrap();
        assert_eq!(model.arity, 3);
        assert_eq!(spec.dim(), 3);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let bad = GOOD.replace("cov.row.2 = 2,8,4", "cov.row.2 = 2,8,oops");
        match parse_config(&bad) {
            Err(Error::ConfigParse { line, msg }) => {
                assert_eq!(line, 6);
                assert!(msg.contains("oops"), "{msg}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
        let unknown = format!("{GOOD}wat = 1\n");
        match parse_config(&unknown) {
            Err(Error::ConfigParse { line, msg }) => {
                assert_eq!(line, 13);
                assert!(msg.contains("unknown key"), "{msg}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
        let conflicting = format!("{GOOD}exact_only = true\nmc_only = true\n");
        assert!(matches!(parse_config(&conflicting), Err(Error::ConfigParse { .. })));
        let short_row = GOOD.replace("cov.row.3 = 2,4,8", "cov.row.3 = 2,4");
        match parse_config(&short_row) {
            Err(Error::ConfigParse { line, .. }) => assert_eq!(line, 7),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn report_csv_shape_and_cells() {
        let (rep, csv) = run_report(GOOD).unwrap();
        assert!(rep.exact_route);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], REPORT_HEADER);
        assert_eq!(lines.len(), 4);
        // dependent block rows leave the Sobol' columns empty
        let first: Vec<&str> = lines[1].split(',').collect();
        assert_eq!(first.len(), 12);
        assert_eq!(first[0], "1");
        assert!(first[4].is_empty() && first[5].is_empty());
        assert!(!first[6].is_empty());
        // every numeric cell parses and is finite
        for line in &lines[1..] {
            for cell in line.split(',').filter(|c| !c.is_empty()) {
                let v: f64 = cell.parse().unwrap();
                assert!(v.is_finite());
            }
        }
    }

    #[test]
    fn figure_rows_cover_all_sets() {
        let rows = figure1_rows(&EstimatorConfig::default()).unwrap();
        assert_eq!(rows.len(), 30);
        for r in &rows {
            assert!(r.ds.is_finite() && r.ds_t.is_finite() && r.dub.is_finite());
            assert!(r.ds >= -1e-10);
            assert!(r.ds_t >= r.ds - 1e-10);
            assert!(r.dub >= r.ds_t - 1e-10, "{r:?}");
        }
        let csv = render_figure1_csv(&rows);
        assert_eq!(csv.lines().count(), 31);
        assert!(csv.starts_with("set,input,DS,DS_T,DUB\nC_1,1,"));
    }
}
