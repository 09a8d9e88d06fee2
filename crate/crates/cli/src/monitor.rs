use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::PathBuf;

use clap::Args;
use nalgebra::DVector;
use serde::Serialize;

use isvd_chart::monitor::MonitorSnapshot;
use isvd_chart::MonitorState;

use crate::calibrate::CalibrationFile;
use crate::error::{read_json, CliError};
use crate::records::parse_line;
use crate::Means;

#[derive(Debug, Clone, Args)]
pub struct MonitorArgs {
    #[arg(long)]
    pub calibration: PathBuf,
    /// Stream file; standard input when omitted or `-`.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Stop after the first alarm.
    #[arg(long)]
    pub halt_on_alarm: bool,
    /// Where the first-alarm summary goes (JSON); standard error when omitted.
    #[arg(long)]
    pub alarm_summary: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Means::Zero)]
    pub means: Means,
    /// Resume from a state snapshot instead of an empty chart.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Write the final state snapshot here.
    #[arg(long)]
    pub snapshot: Option<PathBuf>,
}

/// Reported once, at the first alarm.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlarmSummary {
    pub t: u64,
    pub statistic: f64,
    #[serde(rename = "H")]
    pub h: f64,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

pub(crate) fn cmd_monitor(args: &MonitorArgs, out: &mut impl Write) -> Result<(), CliError> {
    let cal: CalibrationFile = read_json(&args.calibration, "calibration")?;
    let config = cal.config()?;
    let sigma0 = cal.components.build::<f64>(cal.p, cal.q)?;
    let mut state = match &args.resume {
        Some(path) => {
            let snap: MonitorSnapshot = read_json(path, "snapshot")?;
            if snap.p != cal.p || snap.q != cal.q {
                return Err(CliError::Input("snapshot dimensions differ from the calibration".into()));
            }
            MonitorState::restore(&snap)?
        }
        None => MonitorState::init(sigma0, config, cal.p, cal.q)?,
    };
    let centering = match args.means {
        Means::Zero => None,
        Means::Subtract => match (&cal.mu_x, &cal.mu_y) {
            (Some(mx), Some(my)) => Some((DVector::from_column_slice(mx), DVector::from_column_slice(my))),
            _ => return Err(CliError::Input("calibration file has no means to subtract".into())),
        },
    };

    let reader: Box<dyn BufRead> = match &args.input {
        Some(p) if p.as_os_str() != "-" => Box::new(BufReader::new(
            File::open(p).map_err(|e| CliError::Input(format!("cannot open {}: {e}", p.display())))?,
        )),
        _ => Box::new(BufReader::new(std::io::stdin())),
    };

    writeln!(out, "t,statistic,H,alarm")?;
    let mut alarmed = false;
    for (i, line) in reader.lines().enumerate() {
        let Some((g, rec)) = parse_line(&line?, i + 1)? else {
            continue;
        };
        if g.p() != cal.p || g.q() != cal.q {
            return Err(CliError::Stream {
                t: rec.t,
                msg: format!("record has dimensions {}x{}, calibration expects {}x{}", g.p(), g.q(), cal.p, cal.q),
            });
        }
        let g = match &centering {
            Some((mx, my)) => g.centered(mx, my),
            None => g,
        };
        let pt = state.step(&g).map_err(|e| CliError::Stream {
            t: rec.t,
            msg: e.to_string(),
        })?;
        writeln!(out, "{},{},{},{}", rec.t, pt.statistic, config.h, u8::from(pt.alarm))?;
        if pt.alarm && !alarmed {
            alarmed = true;
            let (_, u, v) = state.leading_pattern().expect("alarm implies positive rank");
            let summary = AlarmSummary {
                t: rec.t,
                statistic: pt.statistic,
                h: config.h,
                u: u.iter().copied().collect(),
                v: v.iter().copied().collect(),
            };
            let text = serde_json::to_string(&summary).map_err(|e| CliError::Input(e.to_string()))?;
            match &args.alarm_summary {
                Some(path) => std::fs::write(path, text + "\n")?,
                None => eprintln!("{text}"),
            }
            if args.halt_on_alarm {
                break;
            }
        }
    }
    out.flush()?;
    if let Some(path) = &args.snapshot {
        let text = serde_json::to_string(&state.snapshot()).map_err(|e| CliError::Input(e.to_string()))?;
        std::fs::write(path, text + "\n")?;
    }
    Ok(())
}
