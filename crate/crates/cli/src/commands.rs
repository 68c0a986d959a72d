//! Subcommand execution.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use scoretest::estimator::{fit_restricted, fit_unrestricted, initial_point, FitOptions, Fits, Restriction};
use scoretest::likelihood::{Block, Dataset, InfoKind, LikelihoodModel};
use scoretest::models::{
    breusch_pagan, jarque_bera, koenker, ols, pearson_statistic, robust_skewness_test, BernoulliModel, CauchyModel,
    HeteroskedasticityOptions, MultinomialModel, NormalModel, RegressionModel, ScalarModel,
};
use scoretest::montecarlo::{replication_rng, run_mc, McConfig, DESIGN_STREAM};
use scoretest::robust::{rs_psi, rs_star_d, rs_star_dp, rs_star_p, wald_star};
use scoretest::sequential::{calibrate_boundary, compare_fixed_vs_sequential, run_sequential, ScoreScale, SequentialDesign};
use scoretest::trinity::{lm_form_test, lr_test, one_sided_score_test_at, rao_score_test, wald_test, Direction};
use scoretest::{SarFixture, TestResult, Variant};

use crate::args::{
    Command, DirectionArg, InfoArg, McArgs, ModelArgs, ModelName, RunConfig, ScaleArg, SequentialArgs, SequentialModel,
    SpatialArgs, SpatialStat, TestArgs, TestStat,
};
use crate::error::{CliError, CliResult};
use crate::ingest::{ingest_table, ingest_vector, ingest_weights, Table};
use crate::report::{Details, Estimate, FitSummary, Provenance, Report, SequentialSection};
use crate::selftest;

/// Stream used for the single tie-breaking draw of a sequential run on data.
const TIE_STREAM: u64 = DESIGN_STREAM - 1;

pub fn run(config: &RunConfig) -> CliResult<Report> {
    let (results, details) = match &config.command {
        Command::Fit(a) => (Vec::new(), Some(Details::Fit(fit(a)?))),
        Command::Test(a) => (test(a)?, None),
        Command::SpatialTest(a) => (spatial(a)?, None),
        Command::Sequential(a) => (Vec::new(), Some(Details::Sequential(sequential(a)?))),
        Command::McSize(a) => (Vec::new(), Some(monte_carlo(a, true)?)),
        Command::McPower(a) => (Vec::new(), Some(monte_carlo(a, false)?)),
        Command::Selftest => (Vec::new(), Some(Details::Selftest { checks: selftest::run()? })),
    };
    Ok(Report { run_config_echo: config.clone(), results, details, provenance: Provenance::now(config.command.seed()) })
}

/// A likelihood model bound to its data, or a regression for the closed-form diagnostics.
enum Loaded {
    Likelihood { model: Box<dyn LikelihoodModel>, data: Dataset, null: Option<Vec<f64>> },
    Regression { y: DVector<f64>, x: DMatrix<f64>, z: Option<DMatrix<f64>> },
}

fn engine_input(path: &Path) -> impl Fn(scoretest::Error) -> CliError + '_ {
    move |e| CliError::input(path, e.to_string())
}

fn regressors(table: &Table, args: &ModelArgs) -> Vec<String> {
    if !args.x.is_empty() {
        return args.x.clone();
    }
    table.headers.iter().filter(|h| *h != "y" && !args.z.contains(h)).cloned().collect()
}

fn columns_present(table: &Table, path: &Path, names: &[String]) -> CliResult<()> {
    match names.iter().find(|c| table.column(c).is_none()) {
        Some(c) => Err(CliError::input(path, format!("missing required column '{c}'"))),
        None => Ok(()),
    }
}

fn parse_null(spec: &str, classes: usize) -> CliResult<Vec<f64>> {
    if spec == "uniform" {
        return Ok(vec![1.0 / classes as f64; classes]);
    }
    let p: Vec<f64> = spec
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| CliError::Usage(format!("--null: '{v}' is not a number"))))
        .collect::<CliResult<_>>()?;
    if p.len() != classes {
        return Err(CliError::Usage(format!("--null has {} probabilities for {classes} classes", p.len())));
    }
    Ok(p)
}

fn load_multinomial(args: &ModelArgs, table: Table) -> CliResult<Loaded> {
    let path = &args.data;
    let data = if let Some(counts) = table.column("count") {
        let mut c = Vec::with_capacity(counts.len());
        for (row, &v) in counts.iter().enumerate() {
            if v < 0.0 || v.fract() != 0.0 {
                return Err(CliError::input(path, format!("line {}, column 'count': {v} is not a non-negative integer", row + 2)));
            }
            c.push(v as u64);
        }
        if c.len() < 2 {
            return Err(CliError::input(path, "need at least two classes"));
        }
        (c.len(), MultinomialModel::dataset_from_counts(&c).map_err(engine_input(path))?)
    } else if let Some(class) = table.column("class") {
        if let Some(row) = class.iter().position(|&v| v < 0.0 || v.fract() != 0.0) {
            return Err(CliError::input(path, format!("line {}, column 'class': labels are 0-based integers", row + 2)));
        }
        let observed = class.iter().fold(0.0f64, |m, &v| m.max(v)) as usize + 1;
        let classes = match &args.null {
            Some(s) if s != "uniform" => s.split(',').count(),
            _ => observed,
        };
        if observed > classes {
            return Err(CliError::input(path, format!("class label {} exceeds the {classes} classes of --null", observed - 1)));
        }
        (classes, Dataset::new(vec![("class", class.to_vec())]).map_err(engine_input(path))?)
    } else {
        return Err(CliError::input(path, "multinomial data needs a 'count' or a 'class' column"));
    };
    let (classes, data) = data;
    let null = args.null.as_deref().map(|s| parse_null(s, classes)).transpose()?;
    Ok(Loaded::Likelihood { model: Box::new(MultinomialModel::new(classes)?), data, null })
}

fn load(args: &ModelArgs) -> CliResult<Loaded> {
    let path = &args.data;
    let table = ingest_table(path, &[])?;
    if args.model == ModelName::Multinomial {
        return load_multinomial(args, table);
    }
    columns_present(&table, path, &["y".to_string()])?;
    let scalar = |model: Box<dyn LikelihoodModel>, table: Table| -> CliResult<Loaded> {
        let y = table.column("y").expect("checked").to_vec();
        let data = Dataset::from_y(y).map_err(engine_input(path))?;
        model.validate_data(&data).map_err(engine_input(path))?;
        Ok(Loaded::Likelihood { model, data, null: None })
    };
    match args.model {
        ModelName::Normal => match args.sigma2 {
            Some(s2) => scalar(Box::new(NormalModel::mean_only(s2).map_err(|e| CliError::Usage(e.to_string()))?), table),
            None => scalar(Box::new(NormalModel::new()), table),
        },
        ModelName::Cauchy => scalar(Box::new(CauchyModel::new()), table),
        ModelName::Bernoulli => scalar(Box::new(BernoulliModel::new()), table),
        ModelName::Ols => {
            let x = regressors(&table, args);
            columns_present(&table, path, &x)?;
            let model = RegressionModel::new(x, !args.no_intercept);
            let data = table.into_dataset().map_err(engine_input(path))?;
            Ok(Loaded::Likelihood { model: Box::new(model), data, null: None })
        }
        ModelName::Bp | ModelName::Koenker | ModelName::Jb | ModelName::SkewRobust => {
            let x_cols = regressors(&table, args);
            columns_present(&table, path, &x_cols)?;
            columns_present(&table, path, &args.z)?;
            let n = table.n();
            let given = table.matrix(&x_cols).expect("checked");
            let x = if args.no_intercept { given } else { given.insert_column(0, 1.0) };
            if x.ncols() == 0 {
                return Err(CliError::Usage("the regression has no regressors".into()));
            }
            let y = DVector::from_column_slice(table.column("y").expect("checked"));
            let z = (!args.z.is_empty()).then(|| table.matrix(&args.z).expect("checked"));
            debug_assert_eq!(y.len(), n);
            Ok(Loaded::Regression { y, x, z })
        }
        ModelName::Multinomial => unreachable!("handled above"),
    }
}

/// `name=value` or `index=value` pairs against the model's parameter names.
fn parse_restriction(spec: &str, names: &[String]) -> CliResult<(Vec<usize>, Vec<f64>)> {
    let mut indices = Vec::new();
    let mut values = Vec::new();
    for part in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--restrict entry '{part}' is not name=value")))?;
        let (key, value) = (key.trim(), value.trim());
        let index = match names.iter().position(|n| n == key) {
            Some(i) => i,
            None => key
                .parse::<usize>()
                .ok()
                .filter(|&i| i < names.len())
                .ok_or_else(|| CliError::Usage(format!("unknown parameter '{key}'; parameters are {}", names.join(", "))))?,
        };
        if indices.contains(&index) {
            return Err(CliError::Usage(format!("parameter '{}' is restricted twice", names[index])));
        }
        indices.push(index);
        values.push(value.parse::<f64>().map_err(|_| CliError::Usage(format!("--restrict value '{value}' is not a number")))?);
    }
    if indices.is_empty() {
        return Err(CliError::Usage("--restrict names no parameter".into()));
    }
    Ok((indices, values))
}

fn restriction_for(args: &ModelArgs, model: &dyn LikelihoodModel, null: &Option<Vec<f64>>) -> CliResult<Option<Restriction>> {
    let subset = match (&args.restrict, null) {
        (Some(_), Some(_)) => return Err(CliError::Usage("give either --restrict or --null, not both".into())),
        (Some(spec), None) => Some(parse_restriction(spec, &model.param_names())?),
        (None, Some(p)) => Some(((0..model.dim()).collect(), p[..model.dim()].to_vec())),
        (None, None) => None,
    };
    subset.map(|(i, v)| Restriction::subset(i, v).map_err(|e| CliError::Usage(e.to_string()))).transpose()
}

fn options(args: &ModelArgs) -> FitOptions {
    FitOptions { tol: args.tol, max_iter: args.max_iter }
}

fn fit(args: &ModelArgs) -> CliResult<FitSummary> {
    let Loaded::Likelihood { model, data, null } = load(args)? else {
        return Err(CliError::Usage(format!("{:?} is a diagnostic, not a model that can be fitted; use the test subcommand", args.model)));
    };
    let start = initial_point(model.as_ref(), &data)?;
    let restriction = restriction_for(args, model.as_ref(), &null)?;
    let result = match &restriction {
        Some(r) => fit_restricted(model.as_ref(), &data, r, &start, options(args))?,
        None => fit_unrestricted(model.as_ref(), &data, &start, options(args))?,
    };
    let fixed: Vec<usize> = match &restriction {
        Some(Restriction::SubsetFix { indices, .. }) => indices.clone(),
        _ => Vec::new(),
    };
    let estimates = model
        .param_names()
        .into_iter()
        .zip(result.theta.values().iter())
        .enumerate()
        .map(|(i, (name, &value))| Estimate { name, value, fixed: fixed.contains(&i) })
        .collect();
    Ok(FitSummary {
        model: model.name(),
        n: data.n(),
        estimates,
        loglik: result.loglik,
        converged: result.converged,
        iterations: result.iterations,
        gradient_norm: result.gradient_norm,
        lagrange_multipliers: result.lambda.as_ref().map(|l| l.iter().copied().collect()),
        warnings: result.warnings,
    })
}

fn info_kind(arg: Option<InfoArg>) -> InfoKind {
    match arg {
        None | Some(InfoArg::Expected) => InfoKind::Expected,
        Some(InfoArg::Observed) => InfoKind::Observed,
        Some(InfoArg::Opg) => InfoKind::Opg,
    }
}

fn direction(d: DirectionArg) -> Direction {
    match d {
        DirectionArg::Greater => Direction::Greater,
        DirectionArg::Less => Direction::Less,
    }
}

fn requested_stats(args: &TestArgs, multinomial: bool) -> Vec<TestStat> {
    let mut out = Vec::new();
    let base = [TestStat::Rs, TestStat::Wald, TestStat::Lr, TestStat::Lm];
    let stats = if args.stat.is_empty() { &base[..] } else { &args.stat[..] };
    for &s in stats {
        let expanded: Vec<TestStat> = match s {
            TestStat::All => {
                let mut all = vec![TestStat::Rs, TestStat::Wald, TestStat::Lr, TestStat::Lm, TestStat::RsStarD, TestStat::WaldStar];
                if multinomial {
                    all.push(TestStat::Pearson);
                }
                all
            }
            other => vec![other],
        };
        for e in expanded {
            if !out.contains(&e) {
                out.push(e);
            }
        }
    }
    out
}

fn diagnostic_test(model: ModelName, y: &DVector<f64>, x: &DMatrix<f64>, z: Option<&DMatrix<f64>>) -> CliResult<Vec<TestResult>> {
    let opts = HeteroskedasticityOptions::default();
    let need_z = || z.ok_or_else(|| CliError::Usage("bp and koenker need --z".into()));
    Ok(match model {
        ModelName::Bp => vec![breusch_pagan(y, x, need_z()?, opts)?],
        ModelName::Koenker => vec![koenker(y, x, need_z()?, opts)?],
        ModelName::Jb => vec![jarque_bera(ols(y, x)?.residuals.as_slice())?],
        ModelName::SkewRobust => {
            let t = robust_skewness_test(ols(y, x)?.residuals.as_slice())?;
            vec![t.standard, t.robust]
        }
        _ => unreachable!("likelihood models are handled by the engine"),
    })
}

fn test(args: &TestArgs) -> CliResult<Vec<TestResult>> {
    let (model, data, null) = match load(&args.model)? {
        Loaded::Regression { y, x, z } => {
            if !args.stat.is_empty() {
                return Err(CliError::Usage(format!("--stat does not apply to {:?}", args.model.model)));
            }
            return diagnostic_test(args.model.model, &y, &x, z.as_ref());
        }
        Loaded::Likelihood { model, data, null } => (model, data, null),
    };
    let m = model.as_ref();
    let restriction = restriction_for(&args.model, m, &null)?
        .ok_or_else(|| CliError::Usage("test needs a null hypothesis: --restrict (or --null for multinomial)".into()))?;
    let Restriction::SubsetFix { indices, values } = &restriction else { unreachable!("the CLI builds subset restrictions") };
    let kind = info_kind(args.info);
    let stats = requested_stats(args, args.model.model == ModelName::Multinomial);
    let start = initial_point(m, &data)?;
    let fits = Fits::compute(m, &data, &restriction, &start, options(&args.model))?;
    let names = m.param_names();
    let phi: Vec<usize> = args
        .phi
        .iter()
        .map(|p| {
            names
                .iter()
                .position(|n| n == p)
                .filter(|i| indices.contains(i))
                .ok_or_else(|| CliError::Usage(format!("--phi '{p}' is not a restricted parameter")))
        })
        .collect::<CliResult<_>>()?;
    let labelled = || -> CliResult<_> {
        if phi.len() == indices.len() {
            return Err(CliError::Usage("--phi must leave at least one tested parameter".into()));
        }
        let labels = (0..m.dim())
            .map(|i| match (indices.contains(&i), phi.contains(&i)) {
                (true, true) => Block::Phi,
                (true, false) => Block::Psi,
                _ => Block::Gamma,
            })
            .collect();
        Ok(fits.restricted.theta.relabel(labels)?)
    };
    let mut out = Vec::new();
    for s in stats {
        let r = match s {
            TestStat::Rs => rao_score_test(m, &data, &restriction, &fits.restricted, kind)?,
            TestStat::Wald => wald_test(m, &data, &restriction, &fits.unrestricted, kind)?,
            TestStat::Lr => lr_test(&restriction, &fits)?,
            TestStat::Lm => lm_form_test(m, &data, &restriction, &fits.restricted, kind)?,
            TestStat::RsStarD => rs_star_d(m, &data, &restriction, &fits.restricted)?,
            TestStat::WaldStar => wald_star(m, &data, &restriction, &fits.unrestricted)?,
            TestStat::OneSided => {
                if indices.len() != 1 {
                    return Err(CliError::Usage("one-sided needs exactly one restricted parameter".into()));
                }
                one_sided_score_test_at(m, &data, &fits.restricted.theta, indices[0], direction(args.direction), kind)?
            }
            TestStat::RsPsi => rs_psi(m, &data, &labelled()?, kind)?,
            TestStat::RsStarP => rs_star_p(m, &data, &labelled()?, kind)?,
            TestStat::RsStarDp => rs_star_dp(m, &data, &labelled()?)?,
            TestStat::Pearson => {
                let Some(p0) = &null else {
                    return Err(CliError::Usage("pearson needs a multinomial model with --null".into()));
                };
                let counts = MultinomialModel::new(p0.len())?.counts(&data)?;
                debug_assert_eq!(&p0[..values.len()], &values[..]);
                TestResult::chi2(Variant::Pearson, pearson_statistic(&counts, p0)?, p0.len() - 1)?
            }
            TestStat::All => unreachable!("expanded above"),
        };
        out.push(r);
    }
    Ok(out)
}

fn spatial(args: &SpatialArgs) -> CliResult<Vec<TestResult>> {
    let y = ingest_vector(&args.y)?;
    let table = ingest_table(&args.x, &[])?;
    let n = y.len();
    if table.n() != n {
        return Err(CliError::input(&args.x, format!("{} rows, but y has {n}", table.n())));
    }
    let given = table.matrix(&table.headers).expect("all columns exist");
    let x = if args.no_intercept { given } else { given.insert_column(0, 1.0) };
    let mut w = ingest_weights(&args.w, n)?;
    if args.row_standardize {
        w = w.row_standardize();
    }
    let fixture = SarFixture::new(&y, &x, &w)?;
    let mut results = match args.stat {
        SpatialStat::All => fixture.all()?,
        SpatialStat::Psi => vec![fixture.rs_psi()?],
        SpatialStat::PsiStar => vec![fixture.rs_star_psi()?],
        SpatialStat::Phi => vec![fixture.rs_phi()?],
        SpatialStat::PhiStar => vec![fixture.rs_star_phi()?],
        SpatialStat::Joint => vec![fixture.rs_joint()?],
    };
    if !w.is_row_standardized() {
        results[0] = results[0].clone().with_note("W is not row-standardized");
    }
    Ok(results)
}

fn sequential_with<M: ScalarModel + Sync>(model: &M, args: &SequentialArgs) -> CliResult<SequentialSection> {
    let scale = match args.scale {
        ScaleArg::Raw => ScoreScale::Raw,
        ScaleArg::Standardized => ScoreScale::Standardized,
    };
    let design = SequentialDesign::new(args.theta0, args.n_max, args.alpha, direction(args.direction))
        .map_err(|e| CliError::Usage(e.to_string()))?
        .with_scale(scale);
    let calibration = calibrate_boundary(model, &design, args.calibrate_reps, args.seed, None)?;
    let plan = design.with_boundary(calibration.boundary);
    let run = match &args.data {
        Some(path) => {
            let table = ingest_table(path, &["y"])?;
            let y = table.column("y").expect("required").to_vec();
            let tie = replication_rng(args.seed, TIE_STREAM).random::<f64>();
            Some(run_sequential(model, y, &plan, tie)?)
        }
        None => None,
    };
    // Power runs use the next seed so they do not reuse the calibration paths.
    let power = if args.power_at.is_empty() {
        Vec::new()
    } else {
        compare_fixed_vs_sequential(model, &args.power_at, &plan, args.power_reps, args.seed.wrapping_add(1), None)?
    };
    Ok(SequentialSection { calibration, run, power })
}

fn sequential(args: &SequentialArgs) -> CliResult<SequentialSection> {
    match args.model {
        SequentialModel::Normal => {
            sequential_with(&NormalModel::mean_only(args.sigma2).map_err(|e| CliError::Usage(e.to_string()))?, args)
        }
        SequentialModel::Bernoulli => sequential_with(&BernoulliModel::new(), args),
        SequentialModel::Cauchy => sequential_with(&CauchyModel::new(), args),
    }
}

fn monte_carlo(args: &McArgs, size: bool) -> CliResult<Details> {
    if size && args.dgp.len() != 1 {
        return Err(CliError::Usage("mc-size takes exactly one --dgp".into()));
    }
    let statistic = args.statistic.parse()?;
    let mut reports = Vec::with_capacity(args.dgp.len());
    for dgp in &args.dgp {
        let config = McConfig::new(dgp.parse()?, statistic, args.n, args.reps, args.alpha.clone(), args.seed)
            .map_err(|e| match e {
                scoretest::Error::UnknownName(_) => CliError::Engine(e),
                other => CliError::Usage(other.to_string()),
            })?;
        let mut report = run_mc(&config, None)?;
        if !size {
            report.quantiles = None;
        }
        reports.push(report);
    }
    Ok(Details::MonteCarlo { reports })
}
