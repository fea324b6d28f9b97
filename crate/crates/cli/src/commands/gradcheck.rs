//! Finite-difference verification of every analytic gradient, as a
//! command: one line per layer kind, then the correlation head at the
//! requested sizes. Any check over tolerance fails the run.

use clap::Args;
use duet_core::gradcheck::{
    check_cca_loss, check_network, run_layer_suite, standard_layer_suite, GradCheckConfig,
    GradCheckReport,
};
use duet_core::{Error, Result};

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Correlation-head sizes as dim:batch pairs.
    #[arg(long, default_value = "3:30,5:40,8:60")]
    pub cca_sizes: String,
    /// Ridge used by the correlation-head checks.
    #[arg(long, default_value_t = 1e-4)]
    pub ridge: f64,
    /// Deliberately corrupts one analytic gradient; the run must then
    /// fail, proving the harness can catch a broken backward pass.
    #[arg(long, hide = true)]
    pub corrupt_hook: bool,
}

pub fn run(args: &GradcheckArgs) -> Result<()> {
    let cfg = GradCheckConfig {
        seed: args.seed,
        ..GradCheckConfig::default()
    };
    let sizes = parse_sizes(&args.cca_sizes)?;
    if !(args.ridge > 0.0) {
        return Err(Error::Config(format!(
            "ridge must be positive, got {}",
            args.ridge
        )));
    }

    let mut failed = Vec::new();
    let mut show = |name: &str, report: &GradCheckReport| {
        let ok = report.passed(cfg.tolerance);
        println!(
            "{name:<14} {:>5} entries  max rel err {:.3e}  {}",
            report.checked,
            report.max_rel_err,
            if ok { "ok" } else { "FAIL" }
        );
        if !ok {
            failed.push(name.to_string());
        }
    };

    for (name, report) in run_layer_suite(&cfg)? {
        show(&name, &report);
    }
    for (d, n) in sizes {
        let report = check_cca_loss(d, n, args.ridge, &cfg)?;
        show(&format!("cca-head {d}x{n}"), &report);
    }
    if args.corrupt_hook {
        let (_, spec, batch) = standard_layer_suite()
            .into_iter()
            .find(|(name, _, _)| *name == "dense")
            .expect("the layer suite always carries a dense entry");
        let report = check_network(&spec, batch, &cfg, true)?;
        show("corrupt-hook", &report);
    }

    if failed.is_empty() {
        println!("all gradient checks passed (tolerance {:.0e})", cfg.tolerance);
        Ok(())
    } else {
        Err(Error::Numerical(format!(
            "gradient checks failed: {}",
            failed.join(", ")
        )))
    }
}

fn parse_sizes(text: &str) -> Result<Vec<(usize, usize)>> {
    let mut out = Vec::new();
    for part in text.split(',') {
        let pair = part
            .split_once(':')
            .and_then(|(d, n)| Some((d.trim().parse().ok()?, n.trim().parse().ok()?)))
            .filter(|&(d, n): &(usize, usize)| d >= 1 && n >= 2);
        match pair {
            Some(p) => out.push(p),
            None => {
                return Err(Error::Config(format!(
                    "--cca-sizes wants dim:batch pairs like 3:30, got '{part}'"
                )))
            }
        }
    }
    Ok(out)
}
