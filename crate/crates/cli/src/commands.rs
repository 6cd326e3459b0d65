use std::fs;
use std::path::{Path, PathBuf};

use ledgerdedup::config::RunConfig;
use ledgerdedup::economics::{extra_fee_interval, BoundMode, EconParams};
use ledgerdedup::harness::experiment1::{compare_golden, golden, run_experiment1, Figure};
use ledgerdedup::harness::experiment2::run_experiment2;
use ledgerdedup::harness::popcon::{parse_popcon, parse_sizes, render};
use ledgerdedup::harness::scenario::{bundled, replay, run_scenario, ScenarioScript};
use ledgerdedup::harness::{dataset, HarnessError};
use ledgerdedup::money::Money;

use crate::{BoundsArgs, Experiment1Args, Experiment2Args, GenDatasetArgs, OutArgs, ScenarioArgs};

pub struct Outcome {
    pub passed: bool,
    pub summary: String,
}

type Res = Result<Outcome, HarnessError>;

fn read(path: &Path) -> Result<String, HarnessError> {
    fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))
}

fn write(dir: &Path, name: &str, text: &str) -> Result<PathBuf, HarnessError> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let path = dir.join(name);
    fs::write(&path, text).map_err(|e| HarnessError::io(&path, e))?;
    Ok(path)
}

fn load_config(io: &OutArgs) -> Result<(RunConfig, PathBuf), HarnessError> {
    let cfg = match &io.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let out = cfg.out_dir(io.out.as_deref(), None);
    Ok((cfg, out))
}

pub fn bounds(a: BoundsArgs) -> Res {
    // profit does not enter either bound
    let mut p = EconParams::new(a.sf.clone(), a.sf, a.sc)?;
    let mode = match a.costs {
        Some(c) if c.len() == 3 => {
            p = p.with_costs(c[0].clone(), c[1].clone(), c[2].clone());
            BoundMode::CostAware
        }
        Some(_) => return Err(HarnessError::Script("--costs takes three values: user,csp,deploy".into())),
        None => BoundMode::CostFree,
    };
    Ok(match extra_fee_interval(&p, a.n, mode)? {
        Some((lo, hi)) => {
            println!("min_extra_fee {lo}");
            println!("max_extra_fee {hi}");
            Outcome { passed: true, summary: format!("bounds n={}: EF in [{lo}, {hi}]", a.n) }
        }
        None => Outcome { passed: false, summary: format!("bounds n={}: empty interval", a.n) },
    })
}

fn scripts_at(path: &Path) -> Result<Vec<ScenarioScript>, HarnessError> {
    if !path.is_dir() {
        return Ok(vec![ScenarioScript::load(path)?]);
    }
    let mut files: Vec<PathBuf> = fs::read_dir(path)
        .map_err(|e| HarnessError::io(path, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    files.sort();
    files.iter().map(|p| ScenarioScript::load(p)).collect()
}

pub fn scenario(a: ScenarioArgs) -> Res {
    let scripts = match &a.script {
        Some(p) => scripts_at(p)?,
        None => bundled()?,
    };
    if scripts.is_empty() {
        return Err(HarnessError::Script("no scenario scripts found".into()));
    }
    if let Some(recorded) = &a.replay {
        let [script] = scripts.as_slice() else {
            return Err(HarnessError::Script("--replay needs a single script".into()));
        };
        let r = replay(script, &read(recorded)?)?;
        return Ok(match r.first_mismatch {
            None => Outcome { passed: true, summary: format!("replay {}: identical", script.name) },
            Some(line) => Outcome { passed: false, summary: format!("replay {}: differs at line {line}", script.name) },
        });
    }
    let mut failed = 0;
    for s in &scripts {
        let run = run_scenario(s)?;
        let v = &run.verdict;
        println!("{} {}", if v.passed { "PASS" } else { "FAIL" }, v.name);
        for f in &v.failures {
            println!("  {f}");
        }
        if let Some(dir) = &a.trace_dir {
            write(dir, &format!("{}.jsonl", s.name), &run.trace.to_jsonl())?;
        }
        failed += usize::from(!v.passed);
    }
    Ok(Outcome {
        passed: failed == 0,
        summary: format!("scenarios: {} passed, {failed} failed", scripts.len() - failed),
    })
}

pub fn experiment1(a: Experiment1Args) -> Res {
    let (cfg, out) = load_config(&a.io)?;
    let result = run_experiment1(&cfg.experiment1)?;
    let path = write(&out, "experiment1.csv", &result.to_csv())?;
    println!("wrote {}", path.display());
    if !a.check_golden {
        return Ok(Outcome { passed: true, summary: format!("experiment1: {} rows", result.rows.len()) });
    }
    let mut passed = true;
    let mut parts = Vec::new();
    for (fig, tol) in [(Figure::Users, 1e-3), (Figure::Csp, 0.02)] {
        let c = compare_golden(&result, fig, &golden(fig), tol)?;
        for d in &c.outside {
            println!(
                "outside {fig:?} ef={} {} users={}: plotted {} computed {:.6}",
                d.point.ef_fraction, d.point.series, d.point.users, d.point.value, d.computed
            );
        }
        passed &= c.passed();
        parts.push(format!("{fig:?} max delta {:.6} ({} outside {tol})", c.max_delta(), c.outside.len()));
    }
    Ok(Outcome { passed, summary: format!("experiment1: {}", parts.join(", ")) })
}

pub fn experiment2(a: Experiment2Args) -> Res {
    let (mut cfg, out) = load_config(&a.io)?;
    cfg.override_csps(a.csps);
    let dataset = a.dataset.or(cfg.paths.dataset.clone());
    let sizes = a.sizes.or(cfg.paths.sizes.clone());
    let data = match (dataset, sizes) {
        (Some(d), Some(s)) => parse_popcon(&read(&d)?, &parse_sizes(&read(&s)?)?)?,
        (None, None) => dataset::generate(dataset::FULL_PACKAGES, dataset::FULL_REQUESTS, cfg.contract.seed)?,
        _ => return Err(HarnessError::Script("dataset and sizes must be given together".into())),
    };
    let result = run_experiment2(&cfg.experiment2, &data)?;
    let path = write(&out, "experiment2.csv", &result.to_csv())?;
    println!("wrote {}", path.display());
    let bad = result.ordering_violations();
    for r in &bad {
        println!("ordering fails at csp {}: u0 {} u1 {} u2 {}", r.csp, r.u0.to_decimal(4), r.u1.to_decimal(4), r.u2.to_decimal(4));
    }
    let summary = format!(
        "experiment2: {} packages, {} requests, {} providers, ordering holds for {}/{}",
        result.packages,
        result.requests,
        result.rows.len(),
        result.rows.len() - bad.len(),
        result.rows.len()
    );
    Ok(Outcome { passed: !a.check_ordering || bad.is_empty(), summary })
}

pub fn gen_dataset(a: GenDatasetArgs) -> Res {
    let data = dataset::generate(a.packages, a.requests, a.seed)?;
    let (listing, sizes) = render(&data);
    let out = a.out.unwrap_or_else(|| PathBuf::from("."));
    write(&out, "by_inst.txt", &listing)?;
    write(&out, "sizes.txt", &sizes)?;
    let bytes: Money = data.iter().map(|r| Money::from_integer(r.size_bytes)).sum();
    Ok(Outcome {
        passed: true,
        summary: format!("dataset: {} packages, {} requests, {} bytes in {}", data.len(), a.requests, bytes, out.display()),
    })
}
