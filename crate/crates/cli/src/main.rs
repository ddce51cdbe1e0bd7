use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use qdigest_core::costs::{cost_sweep, fit_slope, format_table};
use qdigest_core::format::{parse_digest, parse_frequencies, write_digest};
use qdigest_core::kvc_qa::{aqq, default_subtree_roots, malicious_aqq_omit_left, AUTH_MAGIC};
use qdigest_core::scenario::{parse_levels, LevelSpec, Scenario};
use qdigest_core::validate::{construction_size_bound, size_bound};
use qdigest_core::wda::{wda_authinfo, wda_verify};
use qdigest_core::{validate, KvcAuthInfo, NodeId, QDigest, Quantile, QuantileProof, WdaAuthInfo};

#[derive(Parser)]
#[command(
    name = "qdigest",
    version,
    about = "Build, query and authenticate q-digests"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a digest from a frequency file (`value count` per line).
    Build {
        input: PathBuf,
        #[arg(long)]
        sigma: u64,
        #[arg(long)]
        k: u64,
        /// Cut this many levels off the bottom of the tree.
        #[arg(long, default_value_t = 0)]
        coarse: u32,
        #[command(flatten)]
        out: Output,
    },
    /// Merge two digests with matching parameters.
    Merge {
        a: PathBuf,
        b: PathBuf,
        #[command(flatten)]
        out: Output,
    },
    /// Answer a quantile, rank or range query.
    Query {
        digest: PathBuf,
        #[arg(long, value_name = "NUM/DEN", conflicts_with_all = ["rank", "range"])]
        q: Option<Quantile>,
        #[arg(long, value_name = "X", conflicts_with = "range")]
        rank: Option<u64>,
        #[arg(long, num_args = 2, value_names = ["L", "R"])]
        range: Option<Vec<u64>>,
    },
    /// Write WDA and KVC authentication info for a digest.
    Auth {
        digest: PathBuf,
        #[arg(long, value_name = "FILE")]
        wda: PathBuf,
        #[arg(long, value_name = "FILE")]
        kvc: PathBuf,
        /// Subtree roots to precompute (defaults to the left children
        /// along the right spine).
        #[arg(long, value_delimiter = ',')]
        subtrees: Option<Vec<u64>>,
    },
    /// Produce a quantile proof.
    Prove {
        digest: PathBuf,
        #[arg(long, value_name = "NUM/DEN")]
        q: Quantile,
        /// Act as a dishonest responder that hides these buckets.
        #[arg(long, value_delimiter = ',')]
        omit: Option<Vec<u64>>,
        #[command(flatten)]
        out: Output,
    },
    /// Check a proof (KVC auth) or a digest (WDA auth). Exits 1 on reject.
    Verify {
        #[arg(long, value_name = "FILE")]
        auth: PathBuf,
        #[arg(long, value_name = "FILE", conflicts_with = "digest")]
        proof: Option<PathBuf>,
        #[arg(long, value_name = "FILE")]
        digest: Option<PathBuf>,
        #[arg(long)]
        accelerated: bool,
    },
    /// Run a scenario file and print its transcript.
    Simulate {
        scenario: PathBuf,
        #[arg(long)]
        window: Option<usize>,
        /// `name:k[:coarse],...`, most privileged first.
        #[arg(long)]
        levels: Option<String>,
    },
    /// Sweep parameters and print WDA vs KVC-QA costs.
    Bench {
        #[arg(long, value_delimiter = ',', default_value = "64,256,1024")]
        sigma: Vec<u64>,
        #[arg(long, value_delimiter = ',', default_value = "8")]
        k: Vec<u64>,
        #[arg(long, value_delimiter = ',', default_value = "1/2,1")]
        q: Vec<Quantile>,
        #[arg(long, default_value_t = 4096)]
        values: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Args)]
struct Output {
    /// Output file (stdout when omitted).
    #[arg(short, long, value_name = "FILE")]
    output: Option<PathBuf>,
}

impl Output {
    fn write(&self, text: &str) -> anyhow::Result<()> {
        match &self.output {
            Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
            None => {
                print!("{text}");
                Ok(())
            }
        }
    }
}

enum Outcome {
    Done,
    Rejected,
}

fn read(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_digest(path: &Path) -> anyhow::Result<QDigest> {
    parse_digest(&read(path)?).with_context(|| format!("in {}", path.display()))
}

fn summary(q: &QDigest) -> String {
    let report = validate(q);
    let bound = if report.construction_invariant_holds {
        construction_size_bound(q.k())
    } else {
        size_bound(q.k())
    };
    format!(
        "n={} buckets={} bound={} {} properties={}",
        q.n(),
        q.len(),
        bound,
        if report.size_bound_ok {
            "ok"
        } else {
            "exceeded"
        },
        if report.is_qdigest() {
            "ok"
        } else {
            "violated"
        }
    )
}

fn run(cli: Cli) -> anyhow::Result<Outcome> {
    match cli.command {
        Command::Build {
            input,
            sigma,
            k,
            coarse,
            out,
        } => {
            let freqs = parse_frequencies(&read(&input)?)
                .with_context(|| format!("in {}", input.display()))?;
            let digest = if coarse == 0 {
                QDigest::build(&freqs, k, sigma)?
            } else {
                QDigest::build_coarse(&freqs, k, sigma, coarse)?
            };
            out.write(&write_digest(&digest))?;
            eprintln!("{}", summary(&digest));
        }
        Command::Merge { a, b, out } => {
            let merged = load_digest(&a)?.merge(&load_digest(&b)?)?;
            out.write(&write_digest(&merged))?;
            eprintln!("{}", summary(&merged));
        }
        Command::Query {
            digest,
            q,
            rank,
            range,
        } => {
            let d = load_digest(&digest)?;
            match (q, rank, range) {
                (Some(q), _, _) => println!("{}", d.quantile(q)?),
                (_, Some(x), _) => println!("{}", d.rank(x)?),
                (_, _, Some(r)) => println!("{}", d.range_count(r[0], r[1])?),
                _ => bail!("one of --q, --rank or --range is required"),
            }
        }
        Command::Auth {
            digest,
            wda,
            kvc,
            subtrees,
        } => {
            let d = load_digest(&digest)?;
            let roots = match subtrees {
                Some(ids) => ids
                    .into_iter()
                    .map(|i| NodeId::new(i, d.sigma()))
                    .collect::<qdigest_core::Result<Vec<_>>>()?,
                None => default_subtree_roots(d.sigma()),
            };
            let kvc_info = KvcAuthInfo::publish(&d, &roots)?;
            fs::write(&wda, format!("{}\n", wda_authinfo(&d)))
                .with_context(|| format!("writing {}", wda.display()))?;
            fs::write(&kvc, kvc_info.to_string())
                .with_context(|| format!("writing {}", kvc.display()))?;
        }
        Command::Prove {
            digest,
            q,
            omit,
            out,
        } => {
            let d = load_digest(&digest)?;
            let proof = match omit {
                None => aqq(&d, q)?,
                Some(ids) => {
                    let set = ids
                        .into_iter()
                        .map(|i| NodeId::new(i, d.sigma()))
                        .collect::<qdigest_core::Result<_>>()?;
                    malicious_aqq_omit_left(&d, q, &set)?
                }
            };
            out.write(&proof.to_string())?;
        }
        Command::Verify {
            auth,
            proof,
            digest,
            accelerated,
        } => {
            let auth_text = read(&auth)?;
            if auth_text.starts_with(AUTH_MAGIC) {
                let info: KvcAuthInfo = auth_text
                    .parse()
                    .with_context(|| format!("in {}", auth.display()))?;
                let Some(path) = proof else {
                    bail!("KVC auth info needs --proof")
                };
                let p: QuantileProof = read(&path)?
                    .parse()
                    .with_context(|| format!("in {}", path.display()))?;
                let stats = info.verify(&p, accelerated);
                if stats.accepted {
                    println!("accept answer={} insert_ops={}", p.answer, stats.insert_ops);
                } else {
                    println!(
                        "reject reason={} insert_ops={}",
                        stats.reason, stats.insert_ops
                    );
                    return Ok(Outcome::Rejected);
                }
            } else {
                let info: WdaAuthInfo = auth_text
                    .parse()
                    .with_context(|| format!("in {}", auth.display()))?;
                let Some(path) = digest else {
                    bail!("WDA auth info needs --digest")
                };
                if accelerated {
                    bail!("--accelerated applies to KVC proofs only");
                }
                let verdict = wda_verify(&load_digest(&path)?, &info);
                match verdict.rejected {
                    None => println!("accept buckets={}", verdict.report.size),
                    Some(why) => {
                        println!("reject reason={why}");
                        return Ok(Outcome::Rejected);
                    }
                }
            }
        }
        Command::Simulate {
            scenario,
            window,
            levels,
        } => {
            let mut s = Scenario::parse(&read(&scenario)?)
                .with_context(|| format!("in {}", scenario.display()))?;
            if window.is_some() {
                s.window = window;
            }
            if let Some(spec) = levels {
                s.levels = parse_levels(&spec)?
                    .into_iter()
                    .map(|l| LevelSpec {
                        name: l.name,
                        k: l.k,
                        coarse: l.coarse_levels,
                    })
                    .collect();
            }
            print!("{}", s.run()?);
        }
        Command::Bench {
            sigma,
            k,
            q,
            values,
            seed,
        } => {
            let rows = cost_sweep(&sigma, &k, &q, values, seed)?;
            print!("{}", format_table(&rows));
            for &kk in &k {
                for &qq in &q {
                    let pts: Vec<(f64, f64)> = rows
                        .iter()
                        .filter(|r| r.k == kk && r.q == qq)
                        .map(|r| (r.sigma as f64, r.verifier_inserts as f64))
                        .collect();
                    if pts.len() >= 2 {
                        println!(
                            "# k={kk} q={qq} verifier inserts per unit sigma: {:.3}",
                            fit_slope(&pts)
                        );
                    }
                }
            }
        }
    }
    Ok(Outcome::Done)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::Rejected) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
