use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use patchmatch::annf::SearchParams;
use patchmatch::gpm::GnnfParams;
use patchmatch::patchweb::{Policy, QueryParams, WebParams};
use patchmatch::synthesis::EmSchedule;
use patchmatch::vision::{DenoiseParams, DetectParams, ForgeryParams, LatticeParams};
use patchmatch::PatchGeometry;

#[derive(Parser, Debug)]
#[command(
    name = "patchmatch",
    version,
    about = "Dense patch correspondence and the image tools built on it"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Nearest-neighbor field from A to B, written as an NNF1 dump
    Nnf(NnfArgs),
    /// k nearest neighbors per patch, written as a KNN1 dump
    Knn(KnnArgs),
    /// Rotation/scale field from A to B, written as CSV
    Gnnf(GnnfArgs),
    /// Non-local means denoising over self-matching k-NN
    Denoise(DenoiseArgs),
    /// Copy-move forgery detection; writes the union of detected regions as a mask
    Forgery(ForgeryArgs),
    /// Translational lattice detection
    Lattice(LatticeArgs),
    /// Finds a template in a scene under rotation and scale
    Detect(DetectArgs),
    /// Resizes an image by bidirectional-similarity EM
    Retarget(RetargetArgs),
    /// Fills a masked hole from the rest of the image
    Complete(CompleteArgs),
    /// Moves a region and resynthesizes its surroundings
    Reshuffle(ReshuffleArgs),
    /// Builds a web of nearest-neighbor fields over an image collection
    WebBuild(WebBuildArgs),
    /// Matches a query image against a built web without modifying it
    WebQuery(WebQueryArgs),
    /// Times the field computation and reports memory use as JSON
    Bench(BenchArgs),
    /// Summary statistics of an NNF1 dump
    Stats(StatsArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Args, Debug)]
pub struct Common {
    /// Report format on stdout
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
}

macro_rules! search_args {
    ($name:ident, $defaults:expr) => {
        #[derive(Args, Debug)]
        pub struct $name {
            /// Propagation and random-search sweeps
            #[arg(long, default_value_t = $defaults.iterations)]
            pub iterations: usize,
            /// Ratio between successive random-search radii
            #[arg(long, default_value_t = $defaults.alpha)]
            pub alpha: f64,
            /// Largest random-search radius in pixels [default: larger target side]
            #[arg(long)]
            pub radius: Option<f64>,
            /// Run every sweep even when one improves nothing
            #[arg(long)]
            pub no_early_stop: bool,
            /// Strip workers; 1 is reproducible across machines
            #[arg(long, default_value_t = $defaults.threads)]
            pub threads: usize,
        }

        impl $name {
            pub fn params(&self) -> SearchParams {
                SearchParams {
                    iterations: self.iterations,
                    alpha: self.alpha,
                    radius: self.radius,
                    early_stop: !self.no_early_stop,
                    threads: self.threads,
                }
            }
        }
    };
}

search_args!(SearchArgs, SearchParams::default());
search_args!(ForgerySearch, ForgeryParams::default().search);
search_args!(LatticeSearch, LatticeParams::default().search);
search_args!(DetectSearch, DetectParams::default().search);

fn default_patch() -> usize {
    PatchGeometry::default().size()
}

#[derive(Args, Debug)]
pub struct NnfArgs {
    pub a: PathBuf,
    pub b: PathBuf,
    #[arg(short, long)]
    pub output: PathBuf,
    /// Odd patch side length
    #[arg(long, default_value_t = default_patch())]
    pub patch_size: usize,
    /// Coarse-to-fine initialization
    #[arg(long)]
    pub multiscale: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub search: SearchArgs,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct KnnArgs {
    pub a: PathBuf,
    pub b: PathBuf,
    #[arg(short, long)]
    pub output: PathBuf,
    /// Neighbors kept per patch
    #[arg(short, long, default_value_t = 8)]
    pub k: usize,
    #[arg(long, default_value_t = default_patch())]
    pub patch_size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub search: SearchArgs,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct GnnfArgs {
    pub a: PathBuf,
    pub b: PathBuf,
    /// CSV with one row `x,y,tx,ty,theta,scale,dist` per source patch
    #[arg(short, long)]
    pub output: PathBuf,
    #[arg(long, default_value_t = default_patch())]
    pub patch_size: usize,
    /// Smallest rotation in radians
    #[arg(long, default_value_t = GnnfParams::default().theta_range.0, allow_negative_numbers = true)]
    pub theta_min: f32,
    /// Largest rotation in radians
    #[arg(long, default_value_t = GnnfParams::default().theta_range.1, allow_negative_numbers = true)]
    pub theta_max: f32,
    #[arg(long, default_value_t = GnnfParams::default().scale_range.0)]
    pub scale_min: f32,
    #[arg(long, default_value_t = GnnfParams::default().scale_range.1)]
    pub scale_max: f32,
    /// Compare mean/std standardized patches
    #[arg(long)]
    pub normalized: bool,
    /// Nearest-neighbor instead of bilinear resampling
    #[arg(long)]
    pub nearest: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub search: SearchArgs,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct DenoiseArgs {
    pub input: PathBuf,
    #[arg(short, long)]
    pub output: PathBuf,
    #[arg(long, default_value_t = default_patch())]
    pub patch_size: usize,
    /// Neighbors averaged per patch
    #[arg(short, long, default_value_t = DenoiseParams::default().k)]
    pub k: usize,
    /// Filtering bandwidth on per-sample RMS distance
    #[arg(long, default_value_t = DenoiseParams::default().h)]
    pub h: f64,
    /// Leave each patch out of its own average
    #[arg(long)]
    pub exclude_self: bool,
    #[arg(long, default_value_t = DenoiseParams::default().seed)]
    pub seed: u64,
    #[command(flatten)]
    pub search: SearchArgs,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct ForgeryArgs {
    pub input: PathBuf,
    /// Mask PNG, white where a duplicated region was found
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    #[arg(long, default_value_t = default_patch())]
    pub patch_size: usize,
    #[arg(short, long, default_value_t = ForgeryParams::default().k)]
    pub k: usize,
    /// Chebyshev tolerance when comparing neighbor offsets
    #[arg(long, default_value_t = ForgeryParams::default().offset_agreement)]
    pub offset_agreement: i32,
    /// Largest per-sample squared difference of a duplicate patch
    #[arg(long, default_value_t = ForgeryParams::default().max_patch_dist)]
    pub max_patch_dist: f64,
    /// Smallest reported region, in patch centers
    #[arg(long, default_value_t = ForgeryParams::default().min_region)]
    pub min_region: usize,
    /// Matches closer than this are ignored [default: patch size]
    #[arg(long)]
    pub self_exclusion: Option<i32>,
    #[arg(long, default_value_t = ForgeryParams::default().seed)]
    pub seed: u64,
    #[command(flatten)]
    pub search: ForgerySearch,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct LatticeArgs {
    pub input: PathBuf,
    /// Inlier mask PNG
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    #[arg(long, default_value_t = default_patch())]
    pub patch_size: usize,
    #[arg(short, long, default_value_t = LatticeParams::default().k)]
    pub k: usize,
    /// Largest per-sample distance of a repeat
    #[arg(long, default_value_t = LatticeParams::default().max_patch_dist)]
    pub max_patch_dist: f64,
    /// Largest integer coefficient when explaining an offset
    #[arg(long, default_value_t = LatticeParams::default().max_coeff)]
    pub max_coeff: i32,
    /// Inlier residual in pixels
    #[arg(long, default_value_t = LatticeParams::default().residual)]
    pub residual: f64,
    #[arg(long, default_value_t = LatticeParams::default().min_inliers)]
    pub min_inliers: usize,
    /// RANSAC hypotheses
    #[arg(long, default_value_t = LatticeParams::default().iterations)]
    pub ransac_iterations: usize,
    /// Center patches on their median instead of their mean
    #[arg(long)]
    pub median: bool,
    #[arg(long, default_value_t = LatticeParams::default().seed)]
    pub seed: u64,
    #[command(flatten)]
    pub search: LatticeSearch,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct DetectArgs {
    pub template: PathBuf,
    pub scene: PathBuf,
    #[arg(long, default_value_t = default_patch())]
    pub patch_size: usize,
    #[arg(long, default_value_t = DetectParams::default().theta_range.0, allow_negative_numbers = true)]
    pub theta_min: f32,
    #[arg(long, default_value_t = DetectParams::default().theta_range.1, allow_negative_numbers = true)]
    pub theta_max: f32,
    #[arg(long, default_value_t = DetectParams::default().scale_range.0)]
    pub scale_min: f32,
    #[arg(long, default_value_t = DetectParams::default().scale_range.1)]
    pub scale_max: f32,
    /// Independent field searches tried before giving up
    #[arg(long, default_value_t = DetectParams::default().restarts)]
    pub restarts: usize,
    #[arg(long, default_value_t = DetectParams::default().ransac_iterations)]
    pub ransac_iterations: usize,
    /// Inlier distance in scene pixels
    #[arg(long, default_value_t = DetectParams::default().inlier_threshold)]
    pub inlier_threshold: f64,
    /// Smallest inlier fraction accepted as a detection
    #[arg(long, default_value_t = DetectParams::default().min_confidence)]
    pub min_confidence: f64,
    /// Template patches with a smaller standard deviation do not vote
    #[arg(long, default_value_t = DetectParams::default().min_texture)]
    pub min_texture: f32,
    #[arg(long, default_value_t = DetectParams::default().seed)]
    pub seed: u64,
    #[command(flatten)]
    pub search: DetectSearch,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct EmArgs {
    #[arg(long, default_value_t = EmSchedule::default().patch_size)]
    pub patch_size: usize,
    #[arg(long, default_value_t = EmSchedule::default().pyramid_factor)]
    pub pyramid_factor: f64,
    /// Smallest side of the coarsest level
    #[arg(long, default_value_t = EmSchedule::default().min_dim)]
    pub min_dim: usize,
    #[arg(long, default_value_t = EmSchedule::default().coarse_iters)]
    pub coarse_iters: usize,
    #[arg(long, default_value_t = EmSchedule::default().fine_iters)]
    pub fine_iters: usize,
    /// Size ratio per gradual resizing step
    #[arg(long, default_value_t = EmSchedule::default().gradual_step)]
    pub gradual_step: f64,
    /// Random-search radius at the finest level
    #[arg(long, default_value_t = EmSchedule::default().final_radius.unwrap_or(0.0))]
    pub final_radius: f64,
    /// Search the whole image at the finest level too
    #[arg(long)]
    pub no_final_radius: bool,
    /// Matching sweeps per E-step
    #[arg(long, default_value_t = EmSchedule::default().e_sweeps)]
    pub e_sweeps: usize,
    #[arg(long, default_value_t = EmSchedule::default().threads)]
    pub threads: usize,
    #[arg(long, default_value_t = EmSchedule::default().seed)]
    pub seed: u64,
}

impl EmArgs {
    pub fn schedule(&self) -> EmSchedule {
        EmSchedule {
            patch_size: self.patch_size,
            pyramid_factor: self.pyramid_factor,
            min_dim: self.min_dim,
            coarse_iters: self.coarse_iters,
            fine_iters: self.fine_iters,
            gradual_step: self.gradual_step,
            final_radius: (!self.no_final_radius).then_some(self.final_radius),
            e_sweeps: self.e_sweeps,
            threads: self.threads,
            seed: self.seed,
            ..EmSchedule::default()
        }
    }
}

#[derive(Args, Debug)]
pub struct RetargetArgs {
    pub input: PathBuf,
    #[arg(short, long)]
    pub output: PathBuf,
    /// Output width [default: source width]
    #[arg(long)]
    pub width: Option<usize>,
    /// Output height [default: source height]
    #[arg(long)]
    pub height: Option<usize>,
    /// Line and region constraints, one record per line
    #[arg(long)]
    pub annotations: Option<PathBuf>,
    #[command(flatten)]
    pub em: EmArgs,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct CompleteArgs {
    pub input: PathBuf,
    /// Hole mask; nonzero (or opaque) pixels are filled
    #[arg(long)]
    pub mask: PathBuf,
    /// Indexed-color label image restricting which source fills each pixel
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(short, long)]
    pub output: PathBuf,
    #[command(flatten)]
    pub em: EmArgs,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ShuffleMode {
    Swap,
    Interpolate,
    Clone,
}

#[derive(Args, Debug)]
pub struct ReshuffleArgs {
    pub input: PathBuf,
    /// Region to move as `x0,y0,x1,y1` (half-open)
    #[arg(long)]
    pub region: String,
    /// Displacement as `dx,dy`
    #[arg(long, allow_hyphen_values = true)]
    pub offset: String,
    /// How the output is initialized
    #[arg(long, value_enum, default_value_t = ShuffleMode::Swap)]
    pub mode: ShuffleMode,
    #[arg(long)]
    pub annotations: Option<PathBuf>,
    #[arg(short, long)]
    pub output: PathBuf,
    #[command(flatten)]
    pub em: EmArgs,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct OpsArgs {
    #[arg(long)]
    pub no_propagation: bool,
    #[arg(long)]
    pub no_random_search: bool,
    #[arg(long)]
    pub no_binning: bool,
    #[arg(long)]
    pub no_enrichment: bool,
    #[arg(long)]
    pub no_uniform: bool,
}

#[derive(Args, Debug)]
pub struct WebBuildArgs {
    /// Output directory for the manifest and per-image fields
    #[arg(long)]
    pub dir: PathBuf,
    #[arg(required = true, num_args = 2..)]
    pub images: Vec<PathBuf>,
    #[arg(long, default_value_t = WebParams::default().patch_size)]
    pub patch_size: usize,
    /// Images resident per working set
    #[arg(long, default_value_t = WebParams::default().capacity)]
    pub capacity: usize,
    #[arg(long, default_value_t = WebParams::default().rounds)]
    pub rounds: usize,
    #[arg(long, default_value_t = WebParams::default().sweeps_per_round)]
    pub sweeps: usize,
    /// Share of the working set kept between rounds
    #[arg(long, default_value_t = Policy::default().keep)]
    pub keep: f64,
    /// Share drawn uniformly at random
    #[arg(long, default_value_t = Policy::default().fresh)]
    pub fresh: f64,
    /// Share filled from enrichment links
    #[arg(long, default_value_t = Policy::default().enrich)]
    pub enrich: f64,
    #[arg(long, default_value_t = WebParams::default().alpha)]
    pub alpha: f64,
    #[arg(long, default_value_t = WebParams::default().workers)]
    pub workers: usize,
    #[arg(long, default_value_t = WebParams::default().seed)]
    pub seed: u64,
    #[command(flatten)]
    pub ops: OpsArgs,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct WebQueryArgs {
    #[arg(long)]
    pub dir: PathBuf,
    pub query: PathBuf,
    /// Packed field of the query
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    #[arg(long, default_value_t = QueryParams::default().capacity)]
    pub capacity: usize,
    #[arg(long, default_value_t = QueryParams::default().rounds)]
    pub rounds: usize,
    #[arg(long, default_value_t = QueryParams::default().sweeps_per_round)]
    pub sweeps: usize,
    #[arg(long, default_value_t = QueryParams::default().alpha)]
    pub alpha: f64,
    #[arg(long, default_value_t = QueryParams::default().workers)]
    pub workers: usize,
    #[arg(long, default_value_t = QueryParams::default().seed)]
    pub seed: u64,
    #[command(flatten)]
    pub ops: OpsArgs,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Source image [default: synthetic pair]
    #[arg(requires = "b")]
    pub a: Option<PathBuf>,
    pub b: Option<PathBuf>,
    /// Width of the synthetic pair
    #[arg(long, default_value_t = 366)]
    pub width: usize,
    /// Height of the synthetic pair
    #[arg(long, default_value_t = 274)]
    pub height: usize,
    /// Also run the exhaustive search and report its mean distance
    #[arg(long)]
    pub oracle: bool,
    #[arg(long, default_value_t = default_patch())]
    pub patch_size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write the report to this file
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    #[command(flatten)]
    pub search: SearchArgs,
}

#[derive(Args, Debug)]
pub struct StatsArgs {
    pub input: PathBuf,
    /// Bins of the offset coherence histogram
    #[arg(long, default_value_t = 16)]
    pub bins: usize,
    #[command(flatten)]
    pub common: Common,
}
