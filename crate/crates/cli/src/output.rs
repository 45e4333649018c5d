use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::Path;

use eh_sched::bcd::BcdReport;
use eh_sched::metrics::MetricsReport;

/// Six significant digits, `%g` style.
pub fn sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.5e}");
    let exp: i32 = sci.split_once('e').and_then(|(_, e)| e.parse().ok()).unwrap_or(0);
    if (-5..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        let s = format!("{x:.decimals$}");
        let s = if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        };
        if s == "-0" {
            "0".into()
        } else {
            s
        }
    } else {
        let (mant, e) = sci.split_once('e').expect("exponent form");
        let mant = if mant.contains('.') {
            mant.trim_end_matches('0').trim_end_matches('.')
        } else {
            mant
        };
        format!("{mant}e{e}")
    }
}

fn row(label: &str, values: &[f64]) -> String {
    let mut s = label.to_string();
    for v in values {
        s.push(',');
        s.push_str(&sig6(*v));
    }
    s.push('\n');
    s
}

/// Writes through a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, contents: &str) -> std::io::Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents.as_bytes())?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

pub fn schedule_csv(report: &BcdReport) -> String {
    let sched = &report.schedule;
    let mut out = row("p", sched.powers());
    for (n, tau) in sched.time_alloc().iter().enumerate() {
        out.push_str(&row(&format!("tau_{n}"), tau));
    }
    out
}

pub fn trace_csv(report: &BcdReport) -> String {
    let mut out = String::from("iter,utility\n");
    for (i, u) in report.utility_trace.iter().enumerate() {
        let _ = writeln!(out, "{i},{}", sig6(*u));
    }
    out
}

pub fn metrics_csv(report: &BcdReport, metrics: Option<&MetricsReport>) -> String {
    let mut out = String::from("key,value\n");
    let mut put = |k: &str, v: String| {
        let _ = writeln!(out, "{k},{v}");
    };
    put("utility", sig6(report.utility()));
    put("iterations", report.iterations.to_string());
    put("converged", report.converged.to_string());
    put("power_kkt_residual", sig6(report.power_kkt_residual));
    if let Some(m) = metrics {
        put("baseline_utility", sig6(m.baseline_utility));
        put("utility_improvement_pct", sig6(m.utility_improvement_pct));
        put("jain_index", sig6(m.jain_index));
        put("baseline_jain_index", sig6(m.baseline_jain_index));
        put("mean_path_loss_db", sig6(m.mean_path_loss_db));
    } else if let Ok(j) = eh_sched::jain_index(report.schedule.user_bits()) {
        put("jain_index", sig6(j));
    }
    for (n, b) in report.schedule.user_bits().iter().enumerate() {
        put(&format!("bits_{n}"), sig6(*b));
    }
    if let Some(m) = metrics {
        for (n, v) in m.per_user_throughput_improvement_pct.iter().enumerate() {
            if let Some(v) = v {
                put(&format!("throughput_improvement_pct_{n}"), sig6(*v));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(sig6(75.7325366), "75.7325");
        assert_eq!(sig6(2.0), "2");
        assert_eq!(sig6(0.000123456789), "0.000123457");
        assert_eq!(sig6(1234567.0), "1.23457e6");
        assert_eq!(sig6(-3.5e-9), "-3.5e-9");
        assert_eq!(sig6(0.0), "0");
        assert_eq!(sig6(999999.7), "1e6");
        assert_eq!(sig6(-1e-20).parse::<f64>().unwrap(), -1e-20);
    }
}
