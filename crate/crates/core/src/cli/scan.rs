//! `scan`: one row per grid point of a d, r or N sweep.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::amd::win_bound;
use crate::extract::search_good_extractor;
use crate::gf::PrimeField;
use crate::lattice::NestedLatticePair;
use crate::oracle::LeakageOracle;
use crate::protocol::{rate_report, ProtocolParams};

use super::config::{RunConfig, ScanKind};
use super::{render_csv, render_json, CliError, CommandOutput, OutputFormat, EXIT_OK};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanRow {
    pub parameter: &'static str,
    pub value: usize,
    pub q: u64,
    pub r: usize,
    pub d: usize,
    #[serde(rename = "N")]
    pub n_lattice: usize,
    #[serde(rename = "winBound")]
    pub win_bound: Option<f64>,
    pub n: Option<usize>,
    #[serde(rename = "RT")]
    pub rt: Option<f64>,
    #[serde(rename = "RTLimit")]
    pub rt_limit: Option<f64>,
    #[serde(rename = "bestLeakage")]
    pub best_leakage: Option<f64>,
    #[serde(rename = "averageLeakage")]
    pub average_leakage: Option<f64>,
    /// `ok`, or `skipped: <reason>` when the point is outside what can be evaluated.
    pub status: String,
}

fn rate_row(params: &ProtocolParams, parameter: &'static str, value: usize, r: usize, d: usize) -> ScanRow {
    let c = params.config();
    let mut inputs = params.rate_inputs();
    inputs.r = r;
    inputs.d = d;
    let rep = rate_report(&inputs);
    let amd_ok = !(d as u64 + 2).is_multiple_of(c.q);
    ScanRow {
        parameter,
        value,
        q: c.q,
        r,
        d,
        n_lattice: c.n,
        win_bound: Some(
            c.q.checked_pow(r as u32)
                .map(|order| win_bound(d, order))
                .unwrap_or_else(|| (d as f64 + 1.0) / (c.q as f64).powi(r as i32)),
        ),
        n: Some(rep.n),
        rt: Some(rep.rt),
        rt_limit: Some(0.5 * inputs.re),
        best_leakage: None,
        average_leakage: None,
        status: if amd_ok {
            "ok".into()
        } else {
            "no AMD code: q divides d+2".into()
        },
    }
}

fn params_win_bound(cfg: &RunConfig) -> Option<f64> {
    let c = &cfg.protocol;
    c.q.checked_pow(c.r as u32).map(|order| win_bound(c.d, order))
}

fn leakage_row(cfg: &RunConfig, index: usize, n: usize) -> Result<ScanRow, CliError> {
    let c = &cfg.protocol;
    let mut row = ScanRow {
        parameter: "N",
        value: n,
        q: c.q,
        r: c.r,
        d: c.d,
        n_lattice: n,
        win_bound: params_win_bound(cfg),
        n: None,
        rt: None,
        rt_limit: None,
        best_leakage: None,
        average_leakage: None,
        status: "ok".into(),
    };
    if c.r > n {
        row.status = format!("skipped: r = {} exceeds N", c.r);
        return Ok(row);
    }
    let pair = NestedLatticePair::new(n, c.q, 1.0).map_err(|e| CliError::Config(e.to_string()))?;
    let oracle = match LeakageOracle::new(&pair, &cfg.verify.guards) {
        Ok(o) => o,
        Err(e) => {
            row.status = format!("skipped: {e}");
            return Ok(row);
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64);
    let field = PrimeField::new(c.q).map_err(|e| CliError::Config(e.to_string()))?;
    let search = search_good_extractor(field, n, c.r, cfg.scan.candidates, &mut rng, |g| {
        oracle.leakage(g.matrix()).unwrap_or(f64::INFINITY)
    });
    match search {
        Ok(s) => {
            row.best_leakage = Some(s.best_leakage);
            row.average_leakage = Some(s.average_leakage);
        }
        Err(e) => row.status = format!("skipped: {e}"),
    }
    Ok(row)
}

pub fn cmd_scan(cfg: &RunConfig) -> Result<(Vec<ScanRow>, CommandOutput), CliError> {
    cfg.validate_scan()?;
    let mut rows = Vec::new();
    if cfg.scan.kind == ScanKind::N {
        for (i, &v) in cfg.scan.values.iter().enumerate() {
            rows.push(leakage_row(cfg, i, v)?);
        }
    } else {
        let params = cfg.protocol_params()?;
        let c = params.config();
        for &v in &cfg.scan.values {
            rows.push(match cfg.scan.kind {
                ScanKind::R => rate_row(&params, "r", v, v, c.d),
                _ => rate_row(&params, "d", v, c.r, v),
            });
        }
    }
    let text = match cfg.format {
        OutputFormat::Csv => render_csv("scan", cfg, &rows)?,
        OutputFormat::Json => render_json("scan", cfg, &rows)?,
    };
    Ok((rows, CommandOutput { text, exit_code: EXIT_OK }))
}
