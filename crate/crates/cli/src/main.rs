use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use derand::algebra::{Field, LinearCode};
use derand::constructions::{
    build_balanced_code, build_bias_set, build_kwise_polytime, build_phf, compose, BuildOptions, KwiseParams,
    Method, PhfParams, Route, RouteChoice,
};
use derand::derandomizer::PotentialTrace;
use derand::format;
use derand::numerics::{parse_rational, rational_string, rational_to_f64};
use derand::verifier::{
    check_bias_with_budget, check_code_balance_with_budget, check_kwise_with_budget, check_phf_density_with_budget,
    lower_bound_report, Norm, VerificationReport,
};
use derand::{Alphabet, Provenance, Rational, SampleMultiset, DEFAULT_BUDGET, VERSION};

const BUDGET_VAR: &str = "DERAND_BUDGET";

#[derive(Parser)]
#[command(name = "derand", version, about = "Build and verify small-bias sets, balanced codes, k-wise sets and hash families")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build an object and write it with a sidecar manifest.
    Construct {
        #[command(subcommand)]
        target: Target,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Brute-force check a written object.
    Verify {
        #[command(subcommand)]
        target: VerifyTarget,
        /// Read this file.
        #[arg(long = "in", global = true)]
        input: Option<PathBuf>,
        /// Print a table instead of key=value lines.
        #[arg(long, global = true)]
        table: bool,
    },
    /// Compose a hash family over [q]^n with an inner set of length q.
    Compose {
        #[arg(long)]
        phf: PathBuf,
        #[arg(long)]
        inner: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the constant-free size expressions for comparison.
    Bounds {
        #[arg(long)]
        n: u64,
        #[arg(long)]
        k: u32,
        #[arg(long, value_parser = rational_arg)]
        eps: Rational,
        #[arg(long, value_parser = norm_arg, default_value = "linf")]
        norm: Norm,
        /// Size actually achieved, shown alongside.
        #[arg(long)]
        achieved: Option<u64>,
        /// Take the achieved size from a written object.
        #[arg(long = "in")]
        input: Option<PathBuf>,
    },
    /// Re-run a construction from its manifest and compare digests.
    Rerun {
        #[arg(long)]
        manifest: PathBuf,
        /// Write the fresh output here instead of the recorded path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Clone)]
struct OutputArgs {
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Dump the potential trace here.
    #[arg(long, global = true)]
    trace: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value = "conditional")]
    method: MethodArg,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Conditional,
    Enumerated,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum RouteArg {
    Auto,
    Direct,
    Composed,
}

#[derive(Subcommand, Clone, Debug)]
enum Target {
    /// Small-bias set in {0,1}^n.
    Bias {
        #[arg(long)]
        n: usize,
        #[arg(long, value_parser = rational_arg)]
        eps: Rational,
    },
    /// Almost k-wise independent set in {0,1}^n.
    Kwise {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        k: usize,
        #[arg(long, value_parser = rational_arg)]
        eps: Rational,
        #[arg(long, value_parser = norm_arg, default_value = "linf")]
        norm: Norm,
        /// Prefix length of the L1 grouping.
        #[arg(long)]
        r: Option<usize>,
        #[arg(long, value_enum, default_value = "auto")]
        route: RouteArg,
    },
    /// Dense perfect hash family in [q]^n.
    Phf {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        q: u32,
        #[arg(long)]
        k: usize,
        #[arg(long, value_parser = rational_arg)]
        eps: Rational,
    },
    /// Balanced linear code over F_q; writes the generator rows.
    Code {
        #[arg(long)]
        q: u64,
        #[arg(long)]
        k: usize,
        #[arg(long, value_parser = rational_arg)]
        eps: Rational,
    },
}

#[derive(Subcommand, Clone, Debug)]
enum VerifyTarget {
    Bias {
        #[arg(long, value_parser = rational_arg)]
        eps: Option<Rational>,
    },
    Kwise {
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, value_parser = norm_arg)]
        norm: Option<Norm>,
        #[arg(long, value_parser = rational_arg)]
        eps: Option<Rational>,
    },
    Phf {
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, value_parser = rational_arg)]
        eps: Option<Rational>,
    },
    Code {
        #[arg(long, value_parser = rational_arg)]
        eps: Option<Rational>,
    },
}

fn rational_arg(s: &str) -> Result<Rational, String> {
    parse_rational(s).map_err(|e| e.to_string())
}

fn norm_arg(s: &str) -> Result<Norm, String> {
    s.parse::<Norm>().map_err(|e| e.to_string())
}

/// Failure that maps to a specific exit code.
#[derive(Debug)]
struct Exit(u8);

impl std::fmt::Display for Exit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "exit {}", self.0)
    }
}

impl std::error::Error for Exit {}

fn usage(message: impl std::fmt::Display) -> anyhow::Error {
    anyhow!(derand::Error::InvalidParameter(message.to_string()))
}

fn budget() -> anyhow::Result<u64> {
    match std::env::var(BUDGET_VAR) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| usage(format!("{BUDGET_VAR}={v:?} is not a non-negative integer"))),
        Err(_) => Ok(DEFAULT_BUDGET),
    }
}

struct Built {
    kind: &'static str,
    set: SampleMultiset,
    traces: Vec<PotentialTrace>,
    /// Largest size the construction may emit.
    bound: u64,
}

impl Target {
    fn kind(&self) -> &'static str {
        match self {
            Target::Bias { .. } => "bias",
            Target::Kwise { .. } => "kwise",
            Target::Phf { .. } => "phf",
            Target::Code { .. } => "code",
        }
    }

    fn params(&self) -> Vec<(&'static str, String)> {
        match self {
            Target::Bias { n, eps } => vec![("n", n.to_string()), ("eps", rational_string(eps))],
            Target::Kwise {
                n,
                k,
                eps,
                norm,
                r,
                route,
            } => {
                let mut v = vec![
                    ("n", n.to_string()),
                    ("k", k.to_string()),
                    ("eps", rational_string(eps)),
                    ("norm", norm.to_string()),
                    ("route", route_name(*route).to_string()),
                ];
                if let Some(r) = r {
                    v.push(("r", r.to_string()));
                }
                v
            }
            Target::Phf { n, q, k, eps } => vec![
                ("n", n.to_string()),
                ("q", q.to_string()),
                ("k", k.to_string()),
                ("eps", rational_string(eps)),
            ],
            Target::Code { q, k, eps } => {
                vec![("q", q.to_string()), ("k", k.to_string()), ("eps", rational_string(eps))]
            }
        }
    }

    fn from_params(kind: &str, params: &BTreeMap<String, String>) -> anyhow::Result<Target> {
        let get = |k: &str| -> anyhow::Result<&String> {
            params.get(k).ok_or_else(|| usage(format!("manifest lacks param.{k}")))
        };
        fn num<T: std::str::FromStr>(v: &str) -> anyhow::Result<T> {
            v.parse().map_err(|_| usage(format!("bad number {v:?} in manifest")))
        }
        let eps = || -> anyhow::Result<Rational> { Ok(parse_rational(get("eps")?)?) };
        Ok(match kind {
            "bias" => Target::Bias {
                n: num(get("n")?)?,
                eps: eps()?,
            },
            "kwise" => Target::Kwise {
                n: num(get("n")?)?,
                k: num(get("k")?)?,
                eps: eps()?,
                norm: get("norm")?.parse()?,
                r: params.get("r").map(|v| num(v)).transpose()?,
                route: RouteArg::from_str(get("route")?, true).map_err(usage)?,
            },
            "phf" => Target::Phf {
                n: num(get("n")?)?,
                q: num(get("q")?)?,
                k: num(get("k")?)?,
                eps: eps()?,
            },
            "code" => Target::Code {
                q: num(get("q")?)?,
                k: num(get("k")?)?,
                eps: eps()?,
            },
            other => return Err(usage(format!("unknown construction kind {other:?}"))),
        })
    }

    fn build(&self, options: &BuildOptions) -> anyhow::Result<Built> {
        let kind = self.kind();
        Ok(match self {
            Target::Bias { n, eps } => {
                let b = build_bias_set(*n, eps, options)?;
                Built {
                    kind,
                    bound: b.trace.horizon + 1,
                    set: b.set,
                    traces: vec![b.trace],
                }
            }
            Target::Kwise {
                n,
                k,
                eps,
                norm,
                r,
                route,
            } => {
                let mut params = KwiseParams::new(*n, *k, eps.clone(), *norm);
                params.r = *r;
                let choice = match route {
                    RouteArg::Auto => RouteChoice::Auto,
                    RouteArg::Direct => RouteChoice::Direct,
                    RouteArg::Composed => RouteChoice::Composed,
                };
                let b = build_kwise_polytime(&params, choice, options)?;
                let bound = b.traces.iter().map(|t| t.horizon + 1).product();
                if let Route::Composed { q } = b.route {
                    eprintln!("composed route with q = {q}");
                }
                Built {
                    kind,
                    set: b.set,
                    traces: b.traces,
                    bound,
                }
            }
            Target::Phf { n, q, k, eps } => {
                let params = PhfParams {
                    n: *n,
                    q: *q,
                    k: *k,
                    epsilon: eps.clone(),
                };
                let b = build_phf(&params, options)?;
                Built {
                    kind,
                    bound: b.trace.horizon + 1,
                    set: b.set,
                    traces: vec![b.trace],
                }
            }
            Target::Code { q, k, eps } => {
                let b = build_balanced_code(*q, *k, eps, options)?;
                let alphabet = Alphabet::from_size(
                    u32::try_from(*q).map_err(|_| usage(format!("q = {q} is too large")))?,
                );
                let mut provenance = Provenance::new("code")
                    .with("q", q)
                    .with("k", k)
                    .with("eps", rational_string(eps));
                provenance.trace_digest = Some(b.trace.digest());
                let set = SampleMultiset::from_words(alphabet, *k, b.code.rows())?.with_provenance(provenance);
                Built {
                    kind,
                    bound: b.trace.horizon + 1,
                    set,
                    traces: vec![b.trace],
                }
            }
        })
    }
}

fn route_name(r: RouteArg) -> &'static str {
    match r {
        RouteArg::Auto => "auto",
        RouteArg::Direct => "direct",
        RouteArg::Composed => "composed",
    }
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest");
    PathBuf::from(s)
}

fn write_manifest(path: &Path, entries: &[(String, String)]) -> anyhow::Result<()> {
    let text: String = entries.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn read_manifest(path: &Path) -> anyhow::Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| anyhow!(derand::Error::Parse {
                line: i + 1,
                message: format!("expected key=value, got {line:?}"),
            }))?;
        map.insert(k.to_string(), v.to_string());
    }
    Ok(map)
}

fn read_set(path: &Path) -> anyhow::Result<(format::Header, SampleMultiset)> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(format::parse(&text)?)
}

/// Builds, writes the object and its manifest, returns the output digest.
fn construct(target: &Target, output: &OutputArgs, out: &Path) -> anyhow::Result<String> {
    let options = BuildOptions {
        budget: budget()?,
        method: match output.method {
            MethodArg::Conditional => Method::Conditional,
            MethodArg::Enumerated => Method::Enumerated,
        },
        ..Default::default()
    };
    let start = Instant::now();
    let built = target.build(&options)?;
    let elapsed = start.elapsed();
    let text = format::render(built.kind, &built.set);
    fs::write(out, &text).with_context(|| format!("writing {}", out.display()))?;
    let digest = format::digest(text.as_bytes());
    if let Some(path) = &output.trace {
        let dump: String = built
            .traces
            .iter()
            .enumerate()
            .map(|(i, t)| {
                if built.traces.len() > 1 {
                    format!("# trace {i}\n{}", t.dump())
                } else {
                    t.dump()
                }
            })
            .collect();
        fs::write(path, dump).with_context(|| format!("writing {}", path.display()))?;
    }
    let mut entries = vec![
        ("command".to_string(), "construct".to_string()),
        ("kind".to_string(), built.kind.to_string()),
    ];
    entries.extend(target.params().into_iter().map(|(k, v)| (format!("param.{k}"), v)));
    entries.extend([
        ("method".to_string(), format!("{:?}", output.method).to_lowercase()),
        ("version".to_string(), VERSION.to_string()),
        ("output".to_string(), out.display().to_string()),
        ("sha256".to_string(), digest.clone()),
        ("size".to_string(), built.set.len().to_string()),
        ("bound".to_string(), built.bound.to_string()),
        ("wall_time_ms".to_string(), elapsed.as_millis().to_string()),
    ]);
    write_manifest(&manifest_path(out), &entries)?;
    println!(
        "{} words of length {} written to {} (bound {}, {} ms)",
        built.set.len(),
        built.set.word_length(),
        out.display(),
        built.bound,
        elapsed.as_millis()
    );
    Ok(digest)
}

fn header_rational(header: &format::Header, key: &str) -> anyhow::Result<Option<Rational>> {
    header.params.get(key).map(|v| parse_rational(v)).transpose().map_err(Into::into)
}

fn header_usize(header: &format::Header, key: &str) -> anyhow::Result<Option<usize>> {
    header
        .params
        .get(key)
        .map(|v| v.parse().map_err(|_| usage(format!("header parameter {key}={v} is not a number"))))
        .transpose()
}

fn verify(target: &VerifyTarget, input: &Path) -> anyhow::Result<VerificationReport> {
    let budget = budget()?;
    let (header, set) = read_set(input)?;
    Ok(match target {
        VerifyTarget::Bias { eps } => {
            let eps = eps.clone().or(header_rational(&header, "eps")?);
            check_bias_with_budget(&set, eps.as_ref(), budget)?
        }
        VerifyTarget::Kwise { k, norm, eps } => {
            let k = k
                .or(header_usize(&header, "k")?)
                .ok_or_else(|| usage("--k is required when the file does not record it"))?;
            let norm = match norm {
                Some(n) => *n,
                None => header.params.get("norm").map(|s| s.parse()).transpose()?.unwrap_or(Norm::Linf),
            };
            let eps = eps.clone().or(header_rational(&header, "eps")?);
            check_kwise_with_budget(&set, k, norm, eps.as_ref(), budget)?
        }
        VerifyTarget::Phf { k, eps } => {
            let k = k
                .or(header_usize(&header, "k")?)
                .ok_or_else(|| usage("--k is required when the file does not record it"))?;
            let eps = eps.clone().or(header_rational(&header, "eps")?);
            check_phf_density_with_budget(&set, k, eps.as_ref(), budget)?
        }
        VerifyTarget::Code { eps } => {
            let eps = eps
                .clone()
                .or(header_rational(&header, "eps")?)
                .ok_or_else(|| usage("--eps is required when the file does not record it"))?;
            let field = Field::with_order(set.alphabet().size() as u64)?;
            let rows: Vec<Vec<u32>> = set.words().map(<[u32]>::to_vec).collect();
            let code = LinearCode::new(field, set.word_length(), rows)?;
            check_code_balance_with_budget(&code, &eps, budget)?
        }
    })
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Construct { target, output } => {
            let out = output.out.clone().ok_or_else(|| usage("--out is required"))?;
            construct(&target, &output, &out)?;
        }
        Command::Verify { target, input, table } => {
            let input = input.ok_or_else(|| usage("--in is required"))?;
            let report = verify(&target, &input)?;
            print!("{}", if table { report.to_table() } else { report.to_key_value() });
            if !report.passed {
                return Err(Exit(1).into());
            }
        }
        Command::Compose { phf, inner, out } => {
            let (_, h) = read_set(&phf)?;
            let (_, r) = read_set(&inner)?;
            let set = compose(&h, &r)?;
            let text = format::render("composed", &set);
            fs::write(&out, &text).with_context(|| format!("writing {}", out.display()))?;
            write_manifest(
                &manifest_path(&out),
                &[
                    ("command".into(), "compose".into()),
                    ("phf".into(), phf.display().to_string()),
                    ("inner".into(), inner.display().to_string()),
                    ("version".into(), VERSION.into()),
                    ("output".into(), out.display().to_string()),
                    ("sha256".into(), format::digest(text.as_bytes())),
                    ("size".into(), set.len().to_string()),
                ],
            )?;
            println!("{} words of length {} written to {}", set.len(), set.word_length(), out.display());
        }
        Command::Bounds {
            n,
            k,
            eps,
            norm,
            achieved,
            input,
        } => {
            let mut report = lower_bound_report(n, k, rational_to_f64(&eps), norm);
            report.achieved = match (achieved, input) {
                (Some(a), _) => Some(a),
                (None, Some(path)) => Some(read_set(&path)?.1.len() as u64),
                (None, None) => None,
            };
            print!("{}", report.render());
        }
        Command::Rerun { manifest, out } => {
            let recorded = read_manifest(&manifest)?;
            let field = |k: &str| recorded.get(k).ok_or_else(|| usage(format!("manifest lacks {k}")));
            if field("command")? != "construct" {
                bail!(usage("only construct manifests can be re-run"));
            }
            if field("version")? != VERSION {
                eprintln!("warning: manifest written by version {}, running {VERSION}", field("version")?);
            }
            let params: BTreeMap<String, String> = recorded
                .iter()
                .filter_map(|(k, v)| k.strip_prefix("param.").map(|k| (k.to_string(), v.clone())))
                .collect();
            let target = Target::from_params(field("kind")?, &params)?;
            let method = match recorded.get("method").map(String::as_str) {
                None | Some("conditional") => MethodArg::Conditional,
                Some("enumerated") => MethodArg::Enumerated,
                Some(other) => bail!(usage(format!("unknown method {other:?}"))),
            };
            let out = out.unwrap_or_else(|| PathBuf::from(field("output").unwrap()));
            let output = OutputArgs {
                out: Some(out.clone()),
                trace: None,
                method,
            };
            let digest = construct(&target, &output, &out)?;
            if &digest == field("sha256")? {
                println!("digest match {digest}");
            } else {
                println!("digest mismatch: recorded {} got {digest}", field("sha256")?);
                return Err(Exit(1).into());
            }
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if let Some(Exit(code)) = err.downcast_ref::<Exit>() {
        return *code;
    }
    if let Some(e) = err.downcast_ref::<derand::Error>() {
        return if e.is_usage() || matches!(e, derand::Error::Parse { .. }) { 2 } else { 3 };
    }
    if err.downcast_ref::<std::io::Error>().is_some() {
        return 2;
    }
    3
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            if err.downcast_ref::<Exit>().is_none() {
                eprintln!("error: {err:#}");
            }
            ExitCode::from(exit_code(&err))
        }
    }
}
