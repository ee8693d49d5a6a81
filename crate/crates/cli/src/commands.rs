use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use splitring::analysis::{optimize_coupling, sweep_engine, write_sweep_csv, OptimizeOptions};
use splitring::error::Error;
use splitring::fit::{fit_spectrum, FitOptions, FitResult, MeasuredSpectrum};
use splitring::model::Ordering;
use splitring::response::{fmt_f64, fsr_grid, solve_steady_state, spectrum_sweep, write_spectrum_csv};
use splitring::sfwm::{rate_vs_efficiency_curve, write_curve_csv};

use crate::config::RunConfig;
use crate::plot::svg_from_csv;
use crate::Failure;

pub struct Context {
    pub config: RunConfig,
    pub out_dir: PathBuf,
    pub plot: bool,
}

fn numerical(e: Error) -> Failure {
    match e {
        Error::InvalidParam { name, detail } => Failure::Config(format!("{name}: {detail}")),
        Error::InvalidInput(d) => Failure::Config(d),
        other => Failure::Numerical(other.to_string()),
    }
}

impl Context {
    fn write(&self, name: &str, contents: &[u8]) -> Result<PathBuf, Failure> {
        fs::create_dir_all(&self.out_dir)
            .map_err(|e| Failure::Config(format!("cannot create {}: {e}", self.out_dir.display())))?;
        let path = self.out_dir.join(name);
        fs::write(&path, contents).map_err(|e| Failure::Config(format!("cannot write {}: {e}", path.display())))?;
        Ok(path)
    }

    /// Writes a CSV table and, when requested, its SVG plot.
    fn write_table(&self, stem: &str, csv: Vec<u8>) -> Result<PathBuf, Failure> {
        let path = self.write(&format!("{stem}.csv"), &csv)?;
        if self.plot {
            let text = String::from_utf8_lossy(&csv);
            self.write(&format!("{stem}.svg"), svg_from_csv(&text, stem).as_bytes())?;
        }
        Ok(path)
    }
}

pub fn execute(command: &str, ctx: &Context) -> Result<String, Failure> {
    match command {
        "spectrum" => spectrum(ctx),
        "fields" => fields(ctx),
        "herald" => herald(ctx),
        "sweep" => sweep(ctx),
        "optimize" => optimize(ctx),
        "fit" => fit(ctx),
        other => Err(Failure::Usage(format!("unknown command '{other}'"))),
    }
}

fn wavelength_grid(c: &RunConfig) -> Vec<f64> {
    match c.spectrum.window {
        Some([lo, hi]) => {
            let n = c.spectrum.points;
            if n == 1 {
                return vec![lo];
            }
            (0..n)
                .map(|i| if i == n - 1 { hi } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 })
                .collect()
        }
        None => fsr_grid(&c.ring, c.lambda_center, c.spectrum.points),
    }
}

fn spectrum(ctx: &Context) -> Result<String, Failure> {
    let c = &ctx.config;
    let rows = spectrum_sweep(&c.ring, c.ordering, &wavelength_grid(c), &c.input).map_err(numerical)?;
    let mut csv = Vec::new();
    write_spectrum_csv(&rows, &mut csv).expect("writing to memory");
    let path = ctx.write_table("spectrum", csv)?;
    if let Some((lambda, e)) = rows.iter().find_map(|r| r.values.as_ref().err().map(|e| (r.lambda, e))) {
        return Err(Failure::Numerical(format!("at lambda = {lambda:.9e} m: {e}")));
    }
    let (lambda, t) = rows
        .iter()
        .filter_map(|r| r.values.as_ref().ok().map(|v| (r.lambda, v.t_fwd)))
        .fold((f64::NAN, f64::INFINITY), |acc, cur| if cur.1 < acc.1 { cur } else { acc });
    Ok(format!(
        "spectrum: {} points, min T_fwd = {t:.6e} at lambda = {lambda:.9e} m -> {}",
        rows.len(),
        path.display()
    ))
}

const FIELDS_HEADER: &str = "lambda_m,b2_fwd_re,b2_fwd_im,b2_bwd_re,b2_bwd_im,r_fwd_re,r_fwd_im,r_bwd_re,r_bwd_im,l_fwd_re,l_fwd_im,l_bwd_re,l_bwd_im,p_fwd,p_bwd";

fn fields(ctx: &Context) -> Result<String, Failure> {
    let c = &ctx.config;
    c.ring.validate().map_err(numerical)?;
    let grid = wavelength_grid(c);
    let states: Vec<_> = grid
        .par_iter()
        .map(|&l| (l, solve_steady_state(&c.ring, c.ordering, l, &c.input)))
        .collect();
    let mut csv = format!("{FIELDS_HEADER}\n");
    for (l, s) in &states {
        let vals: Vec<f64> = match s {
            Ok(s) => {
                let mut v = Vec::with_capacity(14);
                for z in [s.b2_fwd, s.b2_bwd, s.r_fwd, s.r_bwd, s.l_fwd, s.l_bwd] {
                    v.push(z.re);
                    v.push(z.im);
                }
                v.push(s.p_fwd);
                v.push(s.p_bwd);
                v
            }
            Err(_) => vec![f64::NAN; 14],
        };
        let cells: Vec<String> = std::iter::once(*l).chain(vals).map(fmt_f64).collect();
        csv.push_str(&cells.join(","));
        csv.push('\n');
    }
    let path = ctx.write_table("fields", csv.into_bytes())?;
    if let Some((l, Err(e))) = states.iter().find(|(_, s)| s.is_err()) {
        return Err(Failure::Numerical(format!("at lambda = {l:.9e} m: {e}")));
    }
    let p_max = states
        .iter()
        .filter_map(|(_, s)| s.as_ref().ok().map(|s| s.p_fwd))
        .fold(0.0, f64::max);
    Ok(format!("fields: {} points, max P_fwd = {p_max:.6e} -> {}", states.len(), path.display()))
}

fn herald(ctx: &Context) -> Result<String, Failure> {
    let c = &ctx.config;
    let grid = c.herald.t_grid.values();
    let rows = rate_vs_efficiency_curve(&c.ring, &grid, c.sfwm.as_ref(), c.lambda_center).map_err(numerical)?;
    let mut csv = Vec::new();
    write_curve_csv(&rows, &mut csv).expect("writing to memory");
    let path = ctx.write_table("herald", csv)?;
    if let Some(r) = rows.iter().find(|r| r.report.is_err()) {
        let e = r.report.as_ref().unwrap_err();
        return Err(Failure::Numerical(format!("at t = {}: {e}", r.t)));
    }
    let best = rows
        .iter()
        .filter_map(|r| r.report.as_ref().ok().map(|rep| (r.t, rep)))
        .max_by(|a, b| a.1.j_herald.total_cmp(&b.1.j_herald));
    match best {
        Some((t, rep)) => Ok(format!(
            "herald: {} rows, peak J_herald/beta^2 = {:.6e} at t = {t:.6} (eta = {:.6}) -> {}",
            rows.len(),
            rep.j_herald_reduced(),
            rep.eta,
            path.display()
        )),
        None => Ok(format!("herald: 0 rows -> {}", path.display())),
    }
}

fn sweep(ctx: &Context) -> Result<String, Failure> {
    let c = &ctx.config;
    c.ring.validate().map_err(numerical)?;
    let grid = c.sweep.grid.values();
    let rows = sweep_engine(&c.ring, c.sweep.axis, &grid, &c.sweep.metrics, c.lambda_center);
    let mut csv = Vec::new();
    write_sweep_csv(c.sweep.axis, &c.sweep.metrics, &rows, &mut csv).expect("writing to memory");
    let path = ctx.write_table("sweep", csv)?;
    for row in &rows {
        if let Some(Err(e)) = row.metrics.iter().find(|m| m.is_err()) {
            return Err(Failure::Numerical(format!("at {} = {}: {e}", c.sweep.axis.name(), row.value)));
        }
    }
    Ok(format!("sweep: {} rows over {} -> {}", rows.len(), c.sweep.axis.name(), path.display()))
}

fn optimize(ctx: &Context) -> Result<String, Failure> {
    let c = &ctx.config;
    let o = &c.optimize;
    let options = OptimizeOptions { coarse_points: o.coarse_points, ..Default::default() };
    let best = optimize_coupling(&c.ring, o.objective, (o.t_range[0], o.t_range[1]), c.lambda_center, &options)
        .map_err(numerical)?;
    let name = serde_json::to_value(o.objective).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
    let csv = format!("objective,t_opt,value\n{name},{},{}\n", fmt_f64(best.t), fmt_f64(best.value));
    let path = ctx.write("optimize.csv", csv.as_bytes())?;
    Ok(format!("optimize: objective = {name}, t* = {:.6}, value = {:.6e} -> {}", best.t, best.value, path.display()))
}

fn fit_table(data: &MeasuredSpectrum, result: &FitResult, ordering: Ordering) -> String {
    let input = Default::default();
    let model: Vec<f64> = data
        .lambda
        .iter()
        .map(|&l| solve_steady_state(&result.params, ordering, l, &input).map_or(f64::NAN, |s| s.b2_fwd.norm_sqr()))
        .collect();
    let norm = |v: &[f64]| {
        let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        v.iter().map(|x| x / m).collect::<Vec<f64>>()
    };
    let (d, m) = (norm(&data.power), norm(&model));
    let mut out = String::from("lambda_m,data_normalized,model_normalized\n");
    for i in 0..data.len() {
        out.push_str(&format!("{},{},{}\n", fmt_f64(data.lambda[i]), fmt_f64(d[i]), fmt_f64(m[i])));
    }
    out
}

fn read_spectrum(path: &Path) -> Result<MeasuredSpectrum, Failure> {
    let file = fs::File::open(path).map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
    MeasuredSpectrum::from_csv(file).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn fit(ctx: &Context) -> Result<String, Failure> {
    let c = &ctx.config;
    let data_path = c
        .fit
        .data
        .as_ref()
        .ok_or_else(|| Failure::Config("fit.data: a measured spectrum path is required".into()))?;
    let data = read_spectrum(data_path)?;
    let free = c.fit.free_params()?;
    let options = FitOptions { ordering: c.ordering, starts: c.fit.starts, ..Default::default() };
    let result = fit_spectrum(&data, &c.ring, &free, &options).map_err(numerical)?;
    let path = ctx.write("fit.txt", result.to_text().as_bytes())?;
    ctx.write_table("fit_spectrum", fit_table(&data, &result, c.ordering).into_bytes())?;
    let summary = format!(
        "fit: residual = {:.3e}, iterations = {}, converged = {} -> {}",
        result.residual,
        result.iterations,
        result.converged,
        path.display()
    );
    if result.converged {
        Ok(summary)
    } else {
        Err(Failure::NotConverged(format!("best-so-far written; {summary}")))
    }
}
