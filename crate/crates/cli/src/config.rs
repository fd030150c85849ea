use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Parser, ValueEnum};
use nestmc::harness::parse_rep_steps;
use nestmc::{budget_grid, AllocationPolicy, Error};

/// Everything one invocation needs, as parsed from the command line.
#[derive(Parser, Clone, Debug, PartialEq)]
#[command(
    name = "nestmc",
    version,
    about = "Nested Monte Carlo convergence and bias experiments"
)]
pub struct RunConfig {
    #[arg(value_enum)]
    pub command: Command,

    /// Sub-action; only `models list` uses it.
    pub action: Option<String>,

    #[arg(long)]
    pub model: Option<String>,

    /// Allocation policy, e.g. `tau:alpha=1,c=1`, `fixed-inner:M=5`, `fixed-outer:N=100`.
    #[arg(long)]
    pub policy: Option<AllocationPolicy>,

    /// `;`-separated policies to compare.
    #[arg(long)]
    pub policies: Option<PolicyList>,

    /// Total budgets: `lo:hi:points` (geometric) or `a,b,c`.
    #[arg(long)]
    pub budgets: Option<Grid>,

    /// Single total budget.
    #[arg(long = "T")]
    pub budget: Option<u64>,

    /// Fixed outer count.
    #[arg(long = "N")]
    pub n: Option<usize>,

    /// Outer counts: `lo:hi:points` or `a,b,c`.
    #[arg(long = "Ns")]
    pub ns: Option<Grid>,

    /// Fixed inner count.
    #[arg(long = "M")]
    pub m: Option<usize>,

    /// Inner counts: `lo:hi:points` or `a,b,c`.
    #[arg(long = "Ms")]
    pub ms: Option<Grid>,

    #[arg(long, default_value_t = 1000)]
    pub reps: usize,

    #[arg(long, env = "NESTMC_SEED", default_value_t = 0)]
    pub seed: u64,

    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,

    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,

    /// Leave the k smallest rows out of slope fits.
    #[arg(long, default_value_t = 0)]
    pub drop_smallest: usize,

    /// Fewer replications at large budgets: `T=R,T=R`.
    #[arg(long, default_value_t)]
    pub rep_schedule: RepSteps,

    /// Worker threads; the output does not depend on it.
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Converge,
    Bias,
    Allocate,
    Collapse,
    Models,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Converge => "converge",
            Command::Bias => "bias",
            Command::Allocate => "allocate",
            Command::Collapse => "collapse",
            Command::Models => "models",
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl RunConfig {
    /// Arguments that parse back to `self` (program name included).
    pub fn to_args(&self) -> Vec<OsString> {
        let mut args: Vec<OsString> = vec!["nestmc".into(), self.command.name().into()];
        if let Some(a) = &self.action {
            args.push(a.into());
        }
        let mut flag = |name: &str, value: String| {
            args.push(format!("--{name}").into());
            args.push(value.into());
        };
        if let Some(v) = &self.model {
            flag("model", v.clone());
        }
        if let Some(v) = &self.policy {
            flag("policy", v.to_string());
        }
        if let Some(v) = &self.policies {
            flag("policies", v.to_string());
        }
        if let Some(v) = &self.budgets {
            flag("budgets", v.to_string());
        }
        if let Some(v) = self.budget {
            flag("T", v.to_string());
        }
        if let Some(v) = self.n {
            flag("N", v.to_string());
        }
        if let Some(v) = &self.ns {
            flag("Ns", v.to_string());
        }
        if let Some(v) = self.m {
            flag("M", v.to_string());
        }
        if let Some(v) = &self.ms {
            flag("Ms", v.to_string());
        }
        flag("reps", self.reps.to_string());
        flag("seed", self.seed.to_string());
        if let Some(v) = &self.out {
            flag("out", v.display().to_string());
        }
        flag(
            "format",
            match self.format {
                Format::Csv => "csv",
                Format::Json => "json",
            }
            .into(),
        );
        flag("drop-smallest", self.drop_smallest.to_string());
        if !self.rep_schedule.0.is_empty() {
            flag("rep-schedule", self.rep_schedule.to_string());
        }
        if let Some(v) = self.workers {
            flag("workers", v.to_string());
        }
        args
    }
}

/// A grid of positive integers.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Grid {
    Geometric { lo: u64, hi: u64, points: usize },
    List(Vec<u64>),
}

impl Grid {
    pub fn values(&self) -> Result<Vec<u64>, Error> {
        match self {
            Grid::Geometric { lo, hi, points } => budget_grid(*lo, *hi, *points),
            Grid::List(v) => Ok(v.clone()),
        }
    }

    pub fn counts(&self) -> Result<Vec<usize>, Error> {
        self.values()?
            .into_iter()
            .map(|v| usize::try_from(v).map_err(|_| Error::InvalidGrid(format!("{v} does not fit in usize"))))
            .collect()
    }
}

impl FromStr for Grid {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        let bad = || Error::InvalidGrid(format!("`{s}` is neither lo:hi:points nor a comma list"));
        if s.contains(':') {
            let parts: Vec<&str> = s.split(':').collect();
            let [lo, hi, points] = parts[..] else {
                return Err(bad());
            };
            Ok(Grid::Geometric {
                lo: lo.trim().parse().map_err(|_| bad())?,
                hi: hi.trim().parse().map_err(|_| bad())?,
                points: points.trim().parse().map_err(|_| bad())?,
            })
        } else {
            let values = s
                .split(',')
                .map(|v| v.trim().parse().map_err(|_| bad()))
                .collect::<Result<Vec<u64>, _>>()?;
            Ok(Grid::List(values))
        }
    }
}

impl fmt::Display for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Grid::Geometric { lo, hi, points } => write!(f, "{lo}:{hi}:{points}"),
            Grid::List(v) => {
                let items: Vec<String> = v.iter().map(u64::to_string).collect();
                f.write_str(&items.join(","))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolicyList(pub Vec<AllocationPolicy>);

impl FromStr for PolicyList {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        s.split(';')
            .map(|p| p.trim().parse())
            .collect::<Result<_, _>>()
            .map(PolicyList)
    }
}

impl fmt::Display for PolicyList {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let items: Vec<String> = self.0.iter().map(ToString::to_string).collect();
        f.write_str(&items.join(";"))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RepSteps(pub Vec<(u64, usize)>);

impl FromStr for RepSteps {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        parse_rep_steps(s).map(RepSteps)
    }
}

impl fmt::Display for RepSteps {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let items: Vec<String> = self.0.iter().map(|(t, r)| format!("{t}={r}")).collect();
        f.write_str(&items.join(","))
    }
}
