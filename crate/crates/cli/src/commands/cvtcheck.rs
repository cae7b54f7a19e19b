use clap::Args;
use serde::Serialize;

use rigdepth_core::cvt::gradient_check;

use crate::error::CliError;

/// Verify analytic attention gradients against finite differences.
#[derive(Args, Debug)]
pub struct CvtCheckArgs {
    /// Number of random instances to check.
    #[arg(long, default_value_t = 20)]
    pub seeds: usize,
    /// First seed; instance k uses seed `base_seed + k`.
    #[arg(long, default_value_t = 0)]
    pub base_seed: u64,
    /// Tokens per instance.
    #[arg(long, default_value_t = 12)]
    pub tokens: usize,
    /// Channels per token (must be divisible by --heads).
    #[arg(long, default_value_t = 8)]
    pub channels: usize,
    /// Attention heads.
    #[arg(long, default_value_t = 2)]
    pub heads: usize,
    /// Maximum tolerated relative error.
    #[arg(long, default_value_t = 1e-4)]
    pub threshold: f64,
    /// Deliberately corrupt one analytic gradient (negative control).
    #[arg(long)]
    pub corrupt: bool,
}

#[derive(Serialize)]
struct CvtCheckSummary {
    seeds: usize,
    tokens: usize,
    channels: usize,
    heads: usize,
    threshold: f64,
    max_rel_error: f64,
    worst_seed: u64,
    pass: bool,
}

pub fn run(args: &CvtCheckArgs) -> Result<(), CliError> {
    if args.seeds == 0 {
        return Err(CliError::Usage("--seeds must be at least 1".into()));
    }
    if !(args.threshold.is_finite() && args.threshold > 0.0) {
        return Err(CliError::Usage(format!(
            "--threshold must be positive, got {}",
            args.threshold
        )));
    }

    let mut max_rel_error = 0.0f64;
    let mut worst_seed = args.base_seed;
    for k in 0..args.seeds {
        let seed = args.base_seed + k as u64;
        let err = gradient_check(seed, args.tokens, args.channels, args.heads, args.corrupt)?;
        eprintln!("seed {seed}: max relative error {err:.3e}");
        if err > max_rel_error {
            max_rel_error = err;
            worst_seed = seed;
        }
    }

    let pass = max_rel_error <= args.threshold;
    super::emit_json(&CvtCheckSummary {
        seeds: args.seeds,
        tokens: args.tokens,
        channels: args.channels,
        heads: args.heads,
        threshold: args.threshold,
        max_rel_error,
        worst_seed,
        pass,
    })?;
    if pass {
        Ok(())
    } else {
        Err(CliError::Check(format!(
            "max relative gradient error {max_rel_error:.3e} (seed {worst_seed}) exceeds {:.1e}",
            args.threshold
        )))
    }
}
