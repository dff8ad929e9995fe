//! `dfsplit`: generate benchmark graphs and push them through the
//! partition / floorplan / pipeline / simulate flow.
//!
//! Every stage reads the artifacts of the stages before it from the bundle
//! directory and writes only its own, so running the stages one by one
//! produces the same bundle as `run`.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dfsplit_core::benchgen::{self, KnnParams, PagerankParams};
use dfsplit_core::cluster::{parse_cluster, ClusterSpec, TopologyKind};
use dfsplit_core::floorplan::SlotAssignment;
use dfsplit_core::flow::{self, Bundle, FlowOptions, Stage};
use dfsplit_core::graph::{parse_task_graph, validate_graph, TaskGraph};
use dfsplit_core::inter::{InterAssignment, SolverKind};
use dfsplit_core::resource::Thresholds;
use dfsplit_core::sim::simulate;
use dfsplit_core::Error;

/// Bundle files in the order the stages produce them.
const ALL_ARTIFACTS: [&str; 6] = [
    "assignment.json",
    "floorplan.json",
    "hbm.json",
    "latency.json",
    "report.json",
    "design.dot",
];

/// Exit code for a run whose partition is an uncertified incumbent.
const EXIT_TIMEOUT: u8 = 4;

#[derive(Parser)]
#[command(name = "dfsplit", version, about = "Multi-FPGA dataflow partitioning and simulation")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write a benchmark task graph as JSON.
    Gen {
        #[command(subcommand)]
        bench: Bench,
        /// Output file; standard output when omitted.
        #[arg(short, long, global = true)]
        output: Option<PathBuf>,
    },
    /// Assign vertices to devices. Writes assignment.json.
    Partition(StageArgs),
    /// Insert network vertices, floorplan slots and bind HBM channels.
    /// Writes floorplan.json and hbm.json.
    Floorplan(StageArgs),
    /// Add crossing registers and balancing FIFOs. Writes latency.json.
    Pipeline(StageArgs),
    /// Simulate the pipelined design. Writes report.json.
    Simulate(SimArgs),
    /// Render the bundle as Graphviz. Writes design.dot.
    Dot(StageArgs),
    /// Run every stage and write the whole bundle.
    Run(SimArgs),
}

#[derive(Subcommand)]
enum Bench {
    Stencil {
        #[arg(long, default_value_t = 512)]
        iterations: u32,
        #[arg(long, default_value_t = 15)]
        pes: usize,
        /// HBM port width in bits.
        #[arg(long, default_value_t = 512)]
        width: u32,
    },
    Pagerank {
        #[arg(long, default_value_t = 4)]
        pes: usize,
        #[arg(long)]
        dataset: Option<String>,
        /// Drop the accumulator-to-router edge.
        #[arg(long)]
        no_feedback: bool,
    },
    Knn {
        #[arg(long, default_value_t = 4_000_000)]
        n: u64,
        #[arg(long, default_value_t = 2)]
        d: u64,
        #[arg(long, default_value_t = 10)]
        k: u64,
        /// Distance (blue) modules.
        #[arg(long, default_value_t = 18)]
        modules: usize,
        /// HBM port width of the distance modules, in bits.
        #[arg(long, default_value_t = 256)]
        port_width: u32,
        /// On-chip buffer per distance module, in KiB.
        #[arg(long, default_value_t = 32)]
        buffer_kb: u64,
    },
    Cnn {
        #[arg(long, default_value_t = 13)]
        rows: usize,
        #[arg(long, default_value_t = 20)]
        cols: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Topo {
    Chain,
    Ring,
    Star,
    Mesh,
    Hypercube,
}

impl From<Topo> for TopologyKind {
    fn from(t: Topo) -> Self {
        match t {
            Topo::Chain => TopologyKind::Chain,
            Topo::Ring => TopologyKind::Ring,
            Topo::Star => TopologyKind::Star,
            Topo::Mesh => TopologyKind::Mesh,
            Topo::Hypercube => TopologyKind::Hypercube,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Solver {
    Internal,
    External,
}

#[derive(Args)]
struct StageArgs {
    /// Task graph JSON.
    graph: PathBuf,
    /// Bundle directory.
    #[arg(short, long)]
    out: PathBuf,
    /// Cluster JSON; overrides --devices, --topology and --nodes.
    #[arg(long)]
    cluster: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    devices: usize,
    #[arg(long, value_enum, default_value_t = Topo::Chain)]
    topology: Topo,
    /// Server nodes the devices are split over.
    #[arg(long, default_value_t = 1)]
    nodes: usize,
    /// Utilization threshold for every resource class.
    #[arg(long)]
    threshold: Option<f64>,
    /// Partition time limit in seconds.
    #[arg(long)]
    time_limit: Option<f64>,
    #[arg(long, value_enum, default_value_t = Solver::Internal)]
    solver: Solver,
    #[arg(long)]
    stages_per_crossing: Option<u64>,
    /// Network streams one device's ports can carry.
    #[arg(long)]
    port_streams: Option<usize>,
    /// Clock in MHz.
    #[arg(long)]
    freq: Option<f64>,
    /// Floorplan devices one at a time.
    #[arg(long)]
    sequential: bool,
}

#[derive(Args)]
struct SimArgs {
    #[command(flatten)]
    stage: StageArgs,
    /// Write the event trace as JSON lines.
    #[arg(long)]
    trace: Option<PathBuf>,
}

/// An error together with the stage it belongs to, if any.
struct Failure {
    stage: Option<Stage>,
    error: Error,
}

impl From<Error> for Failure {
    fn from(error: Error) -> Self {
        Failure { stage: None, error }
    }
}

fn at(stage: Stage) -> impl Fn(Error) -> Failure {
    move |error| Failure {
        stage: Some(stage),
        error,
    }
}

fn read(path: &Path) -> Result<String, Error> {
    fs::read_to_string(path).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Prefix parse errors with the file they came from.
fn in_file(path: &Path) -> impl Fn(Error) -> Error + '_ {
    move |e| match e {
        Error::Parse { path: inner, message } => Error::Parse {
            path: if inner.is_empty() || inner == "." {
                path.display().to_string()
            } else {
                format!("{}: {inner}", path.display())
            },
            message,
        },
        other => other,
    }
}

fn load_graph(path: &Path) -> Result<TaskGraph, Error> {
    let g = parse_task_graph(&read(path)?).map_err(in_file(path))?;
    if let Some(d) = validate_graph(&g).into_iter().next() {
        return Err(Error::Parse {
            path: path.display().to_string(),
            message: d.to_string(),
        });
    }
    Ok(g)
}

impl StageArgs {
    fn cluster(&self) -> Result<ClusterSpec, Error> {
        let mut c = match &self.cluster {
            Some(p) => parse_cluster(&read(p)?).map_err(in_file(p))?,
            None if self.nodes > 1 => {
                if self.devices % self.nodes != 0 {
                    return Err(Error::Parameter(format!(
                        "{} devices do not split evenly over {} nodes",
                        self.devices, self.nodes
                    )));
                }
                ClusterSpec::u55c_nodes(self.topology.into(), self.nodes, self.devices / self.nodes)?
            }
            None => ClusterSpec::u55c(self.topology.into(), self.devices)?,
        };
        if let Some(t) = self.threshold {
            if !(t > 0.0 && t <= 1.0) {
                return Err(Error::Parameter(format!("threshold {t} outside (0, 1]")));
            }
            c.set_threshold(Thresholds::uniform(t));
        }
        Ok(c)
    }

    fn options(&self) -> Result<FlowOptions, Error> {
        let mut o = FlowOptions::default().parallel(!self.sequential);
        if let Some(t) = self.time_limit {
            if !(t.is_finite() && t > 0.0) {
                return Err(Error::Parameter(format!("time limit {t} must be positive")));
            }
            o.time_limit = Some(Duration::from_secs_f64(t));
        }
        o.solver = match self.solver {
            Solver::Internal => SolverKind::Internal,
            Solver::External => SolverKind::External,
        };
        if let Some(k) = self.stages_per_crossing {
            o.pipeline.stages_per_crossing = k;
        }
        if let Some(p) = self.port_streams {
            o.comm.port_streams = p;
            o.sim.port_streams = p;
        }
        if let Some(f) = self.freq {
            if !(f.is_finite() && f > 0.0) {
                return Err(Error::Parameter(format!("frequency {f} MHz must be positive")));
            }
            o.pipeline.frequency_hz = f * 1e6;
            o.sim.frequency_hz = f * 1e6;
        }
        Ok(o)
    }
}

struct Ctx {
    graph: TaskGraph,
    cluster: ClusterSpec,
    opts: FlowOptions,
    dir: PathBuf,
}

impl Ctx {
    fn new(a: &StageArgs) -> Result<Self, Error> {
        let graph = load_graph(&a.graph)?;
        let cluster = a.cluster()?;
        let opts = a.options()?;
        fs::create_dir_all(&a.out)?;
        Ok(Ctx {
            graph,
            cluster,
            opts,
            dir: a.out.clone(),
        })
    }

    fn artifact(&self, name: &str, stage: Stage) -> Result<String, Failure> {
        let p = self.dir.join(name);
        if !p.exists() {
            return Err(Failure {
                stage: Some(stage),
                error: Error::StageMissing(format!("{} (run `{}` first)", p.display(), stage)),
            });
        }
        Ok(read(&p)?)
    }

    fn assignment(&self) -> Result<InterAssignment, Failure> {
        let p = self.dir.join("assignment.json");
        let text = self.artifact("assignment.json", Stage::Partition)?;
        Ok(InterAssignment::from_json(&text).map_err(in_file(&p))?)
    }

    /// Recover the bundle up to and including `upto` from the directory,
    /// recomputing the deterministic network insertion and pipelining.
    fn load(&self, upto: Stage) -> Result<Bundle, Failure> {
        let mut b = Bundle::default();
        let a = self.assignment()?;
        let net = flow::place(&self.graph, &a, &self.cluster, &self.opts).map_err(at(Stage::Comm))?;
        b.assignment = Some(a);
        b.net = Some(net);
        if upto < Stage::Floorplan {
            return Ok(b);
        }
        let fp = self.dir.join("floorplan.json");
        let s = SlotAssignment::from_json(&self.artifact("floorplan.json", Stage::Floorplan)?).map_err(in_file(&fp))?;
        let hp = self.dir.join("hbm.json");
        let h = flow::hbm_from_json(&self.artifact("hbm.json", Stage::Floorplan)?).map_err(in_file(&hp))?;
        b.floorplan = Some(s);
        b.hbm = Some(h);
        if upto < Stage::Pipeline {
            return Ok(b);
        }
        let d = flow::pipelined(
            b.net.as_ref().unwrap(),
            b.floorplan.as_ref().unwrap(),
            b.hbm.as_ref().unwrap(),
            &self.cluster,
            &self.opts,
        )
        .map_err(at(Stage::Pipeline))?;
        b.design = Some(d);
        Ok(b)
    }

    fn write(&self, name: &str, text: &str) -> Result<(), Error> {
        fs::write(self.dir.join(name), text)?;
        Ok(())
    }

    /// Record a stage failure next to the artifacts.
    fn mark_failed(&self, stage: Stage, e: &Error) {
        let _ = self.write("FAILED_AT", &format!("{stage}\n{e}\n"));
    }

    /// Remove `names` and the failure marker before a stage rewrites them.
    fn reset(&self, names: &[&str]) {
        for n in names.iter().chain(&["FAILED_AT"]) {
            let _ = fs::remove_file(self.dir.join(n));
        }
    }
}

fn gen(bench: &Bench, output: Option<&Path>) -> Result<(), Error> {
    let g = match bench {
        Bench::Stencil { iterations, pes, width } => benchgen::gen_stencil(*iterations, *pes, *width)?,
        Bench::Pagerank {
            pes,
            dataset,
            no_feedback,
        } => {
            let mut p = PagerankParams::new(*pes);
            if let Some(name) = dataset {
                p.dataset = benchgen::dataset(name)?.clone();
            }
            p.feedback = !no_feedback;
            benchgen::gen_pagerank_with(&p)?
        }
        Bench::Knn {
            n,
            d,
            k,
            modules,
            port_width,
            buffer_kb,
        } => benchgen::gen_knn_with(&KnnParams {
            port_width: *port_width,
            buffer_kb: *buffer_kb,
            ..KnnParams::new(*n, *d, *k, *modules)
        })?,
        Bench::Cnn { rows, cols } => benchgen::gen_systolic(*rows, *cols)?,
    };
    let text = g.to_json();
    match output {
        Some(p) => fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

/// Exit status for a finished partition.
fn certified_status(a: &InterAssignment) -> u8 {
    if a.certified {
        0
    } else {
        EXIT_TIMEOUT
    }
}

fn partition(a: &StageArgs) -> Result<u8, Failure> {
    let cx = Ctx::new(a)?;
    cx.reset(&ALL_ARTIFACTS);
    match flow::partition(&cx.graph, &cx.cluster, &cx.opts) {
        Ok(asg) => {
            cx.write("assignment.json", &asg.to_json())?;
            Ok(certified_status(&asg))
        }
        Err(e) => {
            cx.mark_failed(Stage::Partition, &e);
            Err(at(Stage::Partition)(e))
        }
    }
}

fn floorplan(a: &StageArgs) -> Result<u8, Failure> {
    let cx = Ctx::new(a)?;
    cx.reset(&ALL_ARTIFACTS[1..]);
    let b = cx.load(Stage::Comm)?;
    let net = b.net.as_ref().unwrap();
    let s = flow::floorplan(net, &cx.cluster, &cx.opts).map_err(|e| {
        cx.mark_failed(Stage::Floorplan, &e);
        at(Stage::Floorplan)(e)
    })?;
    cx.write("floorplan.json", &s.to_json())?;
    let h = flow::bind(net, &s, &cx.cluster, &cx.opts).map_err(|e| {
        cx.mark_failed(Stage::Hbm, &e);
        at(Stage::Hbm)(e)
    })?;
    cx.write("hbm.json", &flow::hbm_json(&h))?;
    Ok(0)
}

fn pipeline(a: &StageArgs) -> Result<u8, Failure> {
    let cx = Ctx::new(a)?;
    cx.reset(&ALL_ARTIFACTS[3..]);
    let b = cx.load(Stage::Pipeline).inspect_err(|f| {
        if let Some(s @ Stage::Pipeline) = f.stage {
            cx.mark_failed(s, &f.error);
        }
    })?;
    cx.write("latency.json", &b.design.unwrap().latency_json())?;
    Ok(0)
}

fn write_trace(path: Option<&Path>, r: &dfsplit_core::sim::SimReport) -> Result<(), Error> {
    if let Some(p) = path {
        fs::write(p, r.trace_lines())?;
    }
    Ok(())
}

fn simulate_stage(a: &SimArgs) -> Result<u8, Failure> {
    let cx = Ctx::new(&a.stage)?;
    cx.reset(&["report.json"]);
    let mut opts = cx.opts.clone();
    opts.sim.trace = a.trace.is_some();
    let b = cx.load(Stage::Pipeline)?;
    let r = simulate(b.design.as_ref().unwrap(), &cx.cluster, &opts.sim).map_err(|e| {
        cx.mark_failed(Stage::Simulate, &e);
        at(Stage::Simulate)(e)
    })?;
    cx.write("report.json", &r.to_json())?;
    write_trace(a.trace.as_deref(), &r)?;
    Ok(0)
}

fn dot(a: &StageArgs) -> Result<u8, Failure> {
    let cx = Ctx::new(a)?;
    cx.reset(&["design.dot"]);
    let b = cx.load(Stage::Pipeline)?;
    cx.write("design.dot", &b.dot()?)?;
    Ok(0)
}

fn run(a: &SimArgs) -> Result<u8, Failure> {
    let cx = Ctx::new(&a.stage)?;
    cx.reset(&ALL_ARTIFACTS);
    let mut opts = cx.opts.clone();
    opts.sim.trace = a.trace.is_some();
    let b = flow::run(&cx.graph, &cx.cluster, &opts);
    for (name, text) in b.files() {
        cx.write(name, &text)?;
    }
    if let Some(r) = &b.report {
        write_trace(a.trace.as_deref(), r)?;
    }
    if let Some((stage, e)) = b.failed {
        return Err(Failure {
            stage: Some(stage),
            error: e,
        });
    }
    Ok(b.assignment.as_ref().map_or(0, certified_status))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.cmd {
        Cmd::Gen { bench, output } => gen(bench, output.as_deref()).map(|_| 0).map_err(Failure::from),
        Cmd::Partition(a) => partition(a),
        Cmd::Floorplan(a) => floorplan(a),
        Cmd::Pipeline(a) => pipeline(a),
        Cmd::Simulate(a) => simulate_stage(a),
        Cmd::Dot(a) => dot(a),
        Cmd::Run(a) => run(a),
    };
    match result {
        Ok(0) => ExitCode::SUCCESS,
        Ok(code) => {
            eprintln!("warning: partition time limit reached; the assignment is not certified optimal");
            ExitCode::from(code)
        }
        Err(f) => {
            match f.stage {
                Some(s) => eprintln!("error: stage {s}: {}", f.error),
                None => eprintln!("error: {}", f.error),
            }
            ExitCode::from(f.error.exit_code() as u8)
        }
    }
}
