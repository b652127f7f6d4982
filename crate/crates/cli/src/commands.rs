use crate::config::{NavMode, RunConfig};
use crate::error::{io_at, CliError};
use crate::plot::{self, PlotSpec, Series, Table};
use imuspeed_core::labels::{
    labels_on_imu, positions_to_speed, prepare_drive, remove_gravity, split_train_val, tilt_for,
    upsample_speed,
};
use imuspeed_core::logs::{find_drives, read_drive, write_drive};
use imuspeed_core::nav::{position_error, run_dr_with, SpeedSource};
use imuspeed_core::net::{load_weights_expecting, predict_stream, save_weights, train_with};
use imuspeed_core::sim::simulate_drive;
use imuspeed_core::{dataset, Drive, SpeedModel};
use nalgebra::Vector2;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

pub const RESOLVED_NAME: &str = "resolved.toml";

/// Creates `out` and writes the resolved config into it.
fn open_out(out: &Path, cfg: &RunConfig) -> Result<(), CliError> {
    fs::create_dir_all(out).map_err(io_at(out))?;
    let path = out.join(RESOLVED_NAME);
    fs::write(&path, cfg.to_toml()).map_err(io_at(&path))
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(io_at(path))
}

/// Expands directories into their drive logs; files are taken as given.
fn drive_inputs(paths: &[PathBuf]) -> Result<Vec<PathBuf>, CliError> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            out.extend(find_drives(p)?);
        } else {
            out.push(p.clone());
        }
    }
    if out.is_empty() {
        return Err(CliError::Io("no drive logs found in --drives".into()));
    }
    Ok(out)
}

fn load_drives(paths: &[PathBuf]) -> Result<Vec<Drive>, CliError> {
    drive_inputs(paths)?
        .iter()
        .map(|p| Ok(read_drive(p)?))
        .collect()
}

/// Start pose from the truth log, or else the first fix and the direction
/// of the first metre travelled.
fn start_pose(drive: &Drive) -> (f64, Vector2<f64>) {
    if let Some(t) = drive.truth.as_ref().and_then(|t| t.first()) {
        return (t.pose.psi, t.pose.p_nav);
    }
    let p0 = drive.fixes[0].p_nav;
    let psi = drive
        .fixes
        .iter()
        .map(|f| f.p_nav - p0)
        .find(|d| d.norm() > 1.0)
        .map_or(0.0, |d| d.y.atan2(d.x));
    log::warn!(
        "{}: no truth log, start heading taken from fixes ({psi:.3} rad)",
        drive.id
    );
    (psi, p0)
}

pub fn simulate(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    open_out(out, cfg)?;
    let mut total = 0.0;
    for i in 0..cfg.sim.drives {
        let id = format!("drive{i:02}");
        let drive = simulate_drive(&id, &cfg.profile(i), &cfg.imu_noise(i), &cfg.rtk_noise(i))?;
        write_drive(out, &drive)?;
        let truth = drive.truth.as_deref().unwrap_or_default();
        let distance: f64 = truth
            .windows(2)
            .map(|w| (w[1].pose.p_nav - w[0].pose.p_nav).norm())
            .sum();
        let max_speed = truth.iter().map(|s| s.speed).fold(0.0, f64::max);
        let duration = drive.imu.last().map_or(0.0, |m| m.t) - drive.imu[0].t;
        total += duration;
        println!(
            "{id}: {duration:.2} s, {:.3} km, max speed {max_speed:.2} m/s",
            distance / 1000.0
        );
    }
    println!(
        "{} drives, {:.1} min in total",
        cfg.sim.drives,
        total / 60.0
    );
    Ok(())
}

pub fn prepare(cfg: &RunConfig, drives: &[PathBuf], out: &Path) -> Result<(), CliError> {
    let drives = load_drives(drives)?;
    open_out(out, cfg)?;
    let windows = drives
        .iter()
        .map(|d| prepare_drive(d, cfg.pipe.tilt.into()))
        .collect::<Result<Vec<_>, _>>()?;
    let split = split_train_val(windows, cfg.pipe.train_ratio)?;
    let path = out.join("dataset.bin");
    dataset::save(&split, &path)?;
    println!(
        "{} drives: {} train windows in {} lanes, {} validation windows in {} lanes ({:.3} train share)",
        drives.len(),
        split.train_windows(),
        split.train.len(),
        split.val_windows(),
        split.val.len(),
        split.train_fraction()
    );
    Ok(())
}

pub fn train(cfg: &RunConfig, data: &Path, out: &Path) -> Result<(), CliError> {
    let split = dataset::load(data)?;
    open_out(out, cfg)?;
    let model = SpeedModel::init(cfg.model_config())?;
    let mut table = String::from("epoch,train_loss[(m/s)^2],train_rmse[m/s],val_rmse[m/s]\n");
    let history_path = out.join("history.csv");
    let result = train_with(model, &split, &cfg.train_config(), |r| {
        let _ = writeln!(
            table,
            "{},{},{},{}",
            r.epoch, r.train_loss, r.train_rmse, r.val_rmse
        );
    });
    write_file(&history_path, &table)?;
    let (model, history) = result?;
    save_weights(&model, out.join("model.bin"))?;
    let last = history.last().expect("at least one epoch");
    let best = history.best().expect("best epoch recorded");
    println!(
        "{} epochs{}: final train RMSE {:.3} m/s, val RMSE {:.3} m/s; kept epoch {} (val RMSE {:.3} m/s)",
        history.records.len(),
        if history.stopped_early { " (early stop)" } else { "" },
        last.train_rmse,
        last.val_rmse,
        best.epoch,
        best.val_rmse
    );
    Ok(())
}

fn load_model(cfg: &RunConfig, path: &Path) -> Result<SpeedModel, CliError> {
    Ok(load_weights_expecting(path, &cfg.model_config())?)
}

fn rmse(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / n.max(1) as f64).sqrt()
}

pub fn evaluate(
    cfg: &RunConfig,
    drives: &[PathBuf],
    model: &Path,
    out: &Path,
) -> Result<(), CliError> {
    let model = load_model(cfg, model)?;
    let drives = load_drives(drives)?;
    open_out(out, cfg)?;
    let mut summary = String::from("drive,samples,model_rmse[m/s],dr_rmse[m/s]\n");
    for drive in &drives {
        let tilt = tilt_for(drive, cfg.nav.tilt.into())?;
        let comp = remove_gravity(&drive.imu, &tilt)?;
        let pred = predict_stream(&model, &comp)?;
        let gt = labels_on_imu(
            &upsample_speed(&positions_to_speed(&drive.fixes)?)?,
            &drive.imu,
        )?;
        let (psi0, p0) = start_pose(drive);
        let plain = run_dr_with(
            drive,
            &SpeedSource::IntegratedAcceleration,
            psi0,
            p0,
            cfg.dr_options(),
        )?;
        let n = pred.len();
        let mut rows = String::from("t[s],dr[m/s],model[m/s],gt[m/s]\n");
        for k in 0..n {
            let _ = writeln!(
                rows,
                "{},{},{},{}",
                pred.t[k], plain.speed[k], pred.s[k], gt.s[k]
            );
        }
        write_file(&out.join(format!("{}.speed.csv", drive.id)), &rows)?;
        let m = rmse(&pred.s, &gt.s[..n]);
        let d = rmse(&plain.speed[..n], &gt.s[..n]);
        let _ = writeln!(summary, "{},{n},{m},{d}", drive.id);
        println!(
            "{}: model RMSE {m:.3} m/s, plain DR speed RMSE {d:.3} m/s over {n} samples",
            drive.id
        );
    }
    write_file(&out.join("evaluation.csv"), &summary)
}

pub fn nav(
    cfg: &RunConfig,
    drives: &[PathBuf],
    model: Option<&Path>,
    mode: NavMode,
    out: &Path,
) -> Result<(), CliError> {
    let source = match mode {
        NavMode::Plain => SpeedSource::IntegratedAcceleration,
        NavMode::Truth => SpeedSource::GroundTruth,
        NavMode::Aided => {
            let path = model.ok_or_else(|| CliError::Config("aided mode needs --model".into()))?;
            SpeedSource::Model(load_model(cfg, path)?)
        }
    };
    let drives = load_drives(drives)?;
    open_out(out, cfg)?;
    for drive in &drives {
        let (psi0, p0) = start_pose(drive);
        let sol = run_dr_with(drive, &source, psi0, p0, cfg.dr_options())?;
        if let Some(k) = sol
            .poses
            .iter()
            .position(|p| !p.p_nav.iter().all(|v| v.is_finite()))
        {
            return Err(CliError::Diverged(format!(
                "{}: position non-finite at t = {} s",
                drive.id, sol.t[k]
            )));
        }
        let err = drive
            .truth
            .as_ref()
            .map(|t| position_error(&sol, t))
            .transpose()?;
        let mut rows = String::from("t[s],px[m],py[m],psi[rad],speed[m/s]");
        rows.push_str(if err.is_some() { ",error[m]\n" } else { "\n" });
        for (k, p) in sol.poses.iter().enumerate() {
            let _ = write!(
                rows,
                "{},{},{},{},{}",
                sol.t[k], p.p_nav.x, p.p_nav.y, p.psi, sol.speed[k]
            );
            if let Some(e) = &err {
                let _ = write!(rows, ",{}", e.err[k]);
            }
            rows.push('\n');
        }
        write_file(
            &out.join(format!("{}.{}.nav.csv", drive.id, mode.name())),
            &rows,
        )?;
        match &err {
            Some(e) => {
                let at60 = e
                    .at(60.0)
                    .map_or("n/a (shorter than 60 s)".to_string(), |v| {
                        format!("{v:.2} m")
                    });
                println!(
                    "{} {}: error at 60 s {at60}, at end {:.2} m",
                    drive.id,
                    mode.name(),
                    e.end
                );
            }
            None => println!(
                "{} {}: no truth log, errors not computed",
                drive.id,
                mode.name()
            ),
        }
    }
    Ok(())
}

pub struct PlotArgs<'a> {
    pub inputs: &'a [PathBuf],
    pub x: Option<&'a str>,
    pub y: &'a [String],
    pub name: Option<&'a str>,
    pub title: Option<&'a str>,
    pub equal_axes: bool,
}

pub fn plot(cfg: &RunConfig, args: &PlotArgs, out: &Path) -> Result<(), CliError> {
    if args.inputs.is_empty() {
        return Err(CliError::Io("no series files given".into()));
    }
    let tables = args
        .inputs
        .iter()
        .map(|p| Table::read(p))
        .collect::<Result<Vec<_>, _>>()?;
    let missing =
        |col: &str, p: &Path| CliError::Config(format!("{}: no column {col:?}", p.display()));
    let mut series = Vec::new();
    let mut x_headers = Vec::new();
    let mut y_headers = Vec::new();
    for (table, path) in tables.iter().zip(args.inputs) {
        let xc = match args.x {
            Some(name) => table.column(name).ok_or_else(|| missing(name, path))?,
            None => 0,
        };
        let ycs: Vec<usize> = if args.y.is_empty() {
            (0..table.header.len()).filter(|&c| c != xc).collect()
        } else {
            args.y
                .iter()
                .map(|n| table.column(n).ok_or_else(|| missing(n, path)))
                .collect::<Result<_, _>>()?
        };
        let stem = path
            .file_name()
            .and_then(|s| s.to_str())
            .unwrap_or("series");
        let stem = stem.strip_suffix(".csv").unwrap_or(stem);
        x_headers.push(table.header[xc].as_str());
        for c in ycs {
            let col = table.header[c].split('[').next().unwrap_or("").to_string();
            series.push(Series {
                name: if tables.len() > 1 {
                    format!("{stem}:{col}")
                } else {
                    col
                },
                x: table.values(xc),
                y: table.values(c),
            });
            y_headers.push(table.header[c].as_str());
        }
    }
    if series.is_empty() {
        return Err(CliError::Io("nothing to plot".into()));
    }
    x_headers.dedup();
    let x_label = plot::axis_label(&x_headers);
    let y_label = plot::axis_label(&y_headers);
    let name = match args.name {
        Some(n) => n.to_string(),
        None => {
            let f = args.inputs[0]
                .file_name()
                .and_then(|s| s.to_str())
                .unwrap_or("plot");
            f.strip_suffix(".csv").unwrap_or(f).to_string()
        }
    };
    open_out(out, cfg)?;
    let spec = PlotSpec {
        title: args.title.unwrap_or(&name),
        x_label: &x_label,
        y_label: &y_label,
        equal_axes: args.equal_axes,
    };
    let svg_path = out.join(format!("{name}.svg"));
    write_file(&svg_path, &plot::svg(&series, &spec))?;
    write_file(
        &out.join(format!("{name}.table.csv")),
        &plot::table_text(&series, &x_label, &y_label),
    )?;
    println!("{}: {} series", svg_path.display(), series.len());
    Ok(())
}
