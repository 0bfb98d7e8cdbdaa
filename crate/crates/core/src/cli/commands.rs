use std::fs::File;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{required, usage, CliError, Common, Report, Result, RunCommand};
use crate::kernels::{check_attention_properties, run_flow_demo, FlowDemoParams};
use crate::lowpoly::{qem_decimate, rebake_lowpoly, transfer_texture};
use crate::mesh::io::{load_mesh, save_obj, write_ply_points};
use crate::mesh::{face_chart_uvs, normalize_to_unit_cube, Aabb, Bvh, ChartScale, TriMesh, UvAtlas, Vec3};
use crate::sampling::{build_point_query, detect_sharp_edges, sample_importance, sample_uniform};
use crate::sdf::metrics::default_band;
use crate::sdf::{marching_cubes, sample_sdf_grid, surface_iou, volume_iou_meshes, SdfGrid};
use crate::texture::{bake, inpaint, BakeParams, Image, MultiViewImages, TextureMap, ViewImage};
use crate::views::{
    default_candidates, default_image_name, greedy_select, orthogonal_views, read_views, write_views, Framing,
    SelectParams, Selection, Viewpoint, DEFAULT_COS_THRESHOLD,
};

const MAX_TEXTURE_SIZE: usize = 8192;

macro_rules! common_impl {
    () => {
        fn common(&self) -> &Common {
            &self.common
        }

        fn set_common(&mut self, common: Common) {
            self.common = common;
        }

        fn threads(&self) -> usize {
            self.threads.unwrap_or(0)
        }
    };
}

/// Value of a parameter that always has a default.
fn val<T: Copy>(v: &Option<T>) -> T {
    v.expect("parameter has a default")
}

fn check_range<T: PartialOrd + std::fmt::Display>(v: T, lo: T, hi: T, flag: &str) -> Result<()> {
    if v < lo || v > hi {
        return Err(usage(format!("--{flag} ({v}) must lie in [{lo}, {hi}]")));
    }
    Ok(())
}

fn check_cos(v: f64) -> Result<()> {
    if !(0.0..1.0).contains(&v) {
        return Err(usage(format!("--cos-threshold ({v}) must lie in [0, 1)")));
    }
    Ok(())
}

/// `dir/stem_suffix.png` next to `path`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}_{suffix}.png"))
}

/// Loads a mesh; without UVs every face gets its own chart sized for `resolution`.
fn load_textured_mesh(path: &Path, resolution: usize, report: &mut Report) -> Result<TriMesh> {
    let mesh = load_mesh(path)?;
    if mesh.uvs().is_some() {
        report.metric("uv_source", "mesh");
        return Ok(mesh);
    }
    report.metric("uv_source", "face-charts");
    let uvs = face_chart_uvs(&mesh, resolution, ChartScale::AreaProportional);
    Ok(mesh.with_uvs(uvs)?)
}

#[derive(clap::Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct SampleArgs {
    /// Input mesh (.obj or .ply).
    #[arg(long)]
    pub mesh: Option<PathBuf>,
    /// Uniform surface samples [default: 8000].
    #[arg(long)]
    pub uniform: Option<usize>,
    /// Sharp-edge samples [default: 8000].
    #[arg(long)]
    pub importance: Option<usize>,
    /// Points kept by farthest point sampling, split evenly between the two
    /// clouds; 0 keeps every sample [default: 1024].
    #[arg(long)]
    pub fps: Option<usize>,
    /// Dihedral angle in degrees above which an edge is sharp [default: 30].
    #[arg(long)]
    pub sharp_angle: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output PLY point cloud with normals.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads, 0 = all cores [default: 0].
    #[arg(long)]
    pub threads: Option<usize>,
    #[serde(skip)]
    #[command(flatten)]
    pub common: Common,
}

impl SampleArgs {
    /// FPS targets for the uniform and importance clouds.
    fn fps_split(&self) -> (usize, usize) {
        let fps = val(&self.fps);
        (fps - fps / 2, fps / 2)
    }
}

impl RunCommand for SampleArgs {
    const NAME: &'static str = "sample";
    common_impl!();

    fn defaults() -> Self {
        Self {
            uniform: Some(8000),
            importance: Some(8000),
            fps: Some(1024),
            sharp_angle: Some(crate::sampling::DEFAULT_DIHEDRAL_THRESHOLD_DEG),
            seed: Some(0),
            threads: Some(0),
            ..Default::default()
        }
    }

    fn validate(&self) -> Result<()> {
        required(&self.mesh, "mesh")?;
        required(&self.out, "out")?;
        check_range(val(&self.uniform), 1, usize::MAX, "uniform")?;
        check_range(val(&self.importance), 1, usize::MAX, "importance")?;
        let angle = val(&self.sharp_angle);
        if !(angle > 0.0 && angle < 180.0) {
            return Err(usage(format!("--sharp-angle ({angle}) must lie in (0, 180)")));
        }
        let (fu, fi) = self.fps_split();
        if fu > val(&self.uniform) || fi > val(&self.importance) {
            return Err(usage(format!(
                "--fps ({}) keeps {fu} uniform and {fi} importance points, more than --uniform/--importance provide",
                val(&self.fps)
            )));
        }
        Ok(())
    }

    fn execute(&mut self, report: &mut Report) -> Result<()> {
        let (mesh_path, out) = (required(&self.mesh, "mesh")?.clone(), required(&self.out, "out")?.clone());
        let (seed, angle) = (val(&self.seed), val(&self.sharp_angle));
        report.input("mesh", &mesh_path);
        let mesh = report.timed("load", || load_mesh(&mesh_path))?;
        let uniform = report.timed("uniform", || sample_uniform(&mesh, val(&self.uniform), seed))?;
        let importance = report.timed("importance", || {
            sample_importance(&mesh, val(&self.importance), seed.wrapping_add(1), angle)
        })?;
        let cloud = if val(&self.fps) == 0 {
            uniform.concat(&importance.cloud)
        } else {
            let (fu, fi) = self.fps_split();
            report.timed("fps", || build_point_query(&uniform, &importance.cloud, fu, fi, seed))?.combined
        };
        write_ply_points(cloud.positions(), cloud.normals(), File::create(&out)?)?;
        report.output("points", &out);
        report.metric("sharp_edges", detect_sharp_edges(&mesh, angle)?.edges.len());
        report.metric("importance_fallback", importance.fell_back);
        report.metric("points_written", cloud.len());
        eprintln!("wrote {} points to {}", cloud.len(), out.display());
        Ok(())
    }
}

#[derive(clap::Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct SdfGridArgs {
    /// Watertight input mesh; exclusive with --sphere-radius.
    #[arg(long)]
    pub mesh: Option<PathBuf>,
    /// Sample the analytic sphere of this radius around the origin instead of a mesh.
    #[arg(long)]
    pub sphere_radius: Option<f64>,
    /// Lattice points per axis [default: 64].
    #[arg(long)]
    pub res: Option<usize>,
    /// The lattice spans [-bound, bound]^3 [default: 1].
    #[arg(long)]
    pub bound: Option<f64>,
    /// Centre the mesh and scale its longest side to 1.9 first [default: true].
    #[arg(long, value_name = "BOOL")]
    pub normalize: Option<bool>,
    /// Output grid file.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub threads: Option<usize>,
    #[serde(skip)]
    #[command(flatten)]
    pub common: Common,
}

impl RunCommand for SdfGridArgs {
    const NAME: &'static str = "sdf-grid";
    common_impl!();

    fn defaults() -> Self {
        Self {
            res: Some(64),
            bound: Some(1.0),
            normalize: Some(true),
            threads: Some(0),
            ..Default::default()
        }
    }

    fn validate(&self) -> Result<()> {
        required(&self.out, "out")?;
        match (&self.mesh, self.sphere_radius) {
            (Some(_), Some(_)) => return Err(usage("--mesh and --sphere-radius are mutually exclusive")),
            (None, None) => return Err(usage("one of --mesh or --sphere-radius is required")),
            (None, Some(r)) if !(r > 0.0 && r.is_finite()) => {
                return Err(usage(format!("--sphere-radius ({r}) must be positive")))
            }
            _ => {}
        }
        check_range(val(&self.res), 2, 1024, "res")?;
        let b = val(&self.bound);
        if !(b > 0.0 && b.is_finite()) {
            return Err(usage(format!("--bound ({b}) must be positive")));
        }
        Ok(())
    }

    fn execute(&mut self, report: &mut Report) -> Result<()> {
        let out = required(&self.out, "out")?.clone();
        let (res, b) = (val(&self.res), val(&self.bound));
        let dims = [res; 3];
        let grid = match (&self.mesh, self.sphere_radius) {
            (None, Some(r)) => report.timed("sample", || {
                SdfGrid::from_fn(dims, Vec3::repeat(-b), 2.0 * b / (res - 1) as f64, |p| p.norm() - r)
            })?,
            (Some(path), _) => {
                report.input("mesh", path);
                let mut mesh = load_mesh(path)?;
                if val(&self.normalize) {
                    mesh = normalize_to_unit_cube(&mesh)?;
                }
                report.timed("sample", || sample_sdf_grid(&mesh, dims, &Aabb::cube(-b, b)))?
            }
            (None, None) => unreachable!("validated"),
        };
        grid.save(&out)?;
        report.output("grid", &out);
        let values = grid.values();
        report.metric("dims", grid.dims());
        report.metric("spacing", grid.spacing());
        report.metric("min_value", values.iter().copied().fold(f64::INFINITY, f64::min));
        report.metric("max_value", values.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        report.metric("inside_points", values.iter().filter(|&&v| v < 0.0).count());
        eprintln!("wrote {res}^3 grid to {}", out.display());
        Ok(())
    }
}

#[derive(clap::Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ExtractArgs {
    /// Grid file written by sdf-grid.
    #[arg(long)]
    pub grid: Option<PathBuf>,
    /// Iso value of the extracted surface [default: 0].
    #[arg(long, allow_negative_numbers = true)]
    pub iso: Option<f64>,
    /// Output OBJ.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub threads: Option<usize>,
    #[serde(skip)]
    #[command(flatten)]
    pub common: Common,
}

impl RunCommand for ExtractArgs {
    const NAME: &'static str = "extract";
    common_impl!();

    fn defaults() -> Self {
        Self {
            iso: Some(0.0),
            threads: Some(0),
            ..Default::default()
        }
    }

    fn validate(&self) -> Result<()> {
        required(&self.grid, "grid")?;
        required(&self.out, "out")?;
        if !val(&self.iso).is_finite() {
            return Err(usage("--iso must be finite"));
        }
        Ok(())
    }

    fn execute(&mut self, report: &mut Report) -> Result<()> {
        let (path, out) = (required(&self.grid, "grid")?.clone(), required(&self.out, "out")?.clone());
        report.input("grid", &path);
        let grid = SdfGrid::load(&path)?;
        let mesh = report.timed("extract", || marching_cubes(&grid, val(&self.iso)))?;
        save_obj(&mesh, &out)?;
        report.output("mesh", &out);
        report.metric("vertex_count", mesh.vertex_count());
        report.metric("face_count", mesh.face_count());
        report.metric("watertight", mesh.is_watertight());
        eprintln!("wrote {} faces to {}", mesh.face_count(), out.display());
        Ok(())
    }
}

#[derive(clap::Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct IouArgs {
    /// First watertight mesh.
    #[arg(long)]
    pub a: Option<PathBuf>,
    /// Second watertight mesh.
    #[arg(long)]
    pub b: Option<PathBuf>,
    /// Monte-Carlo samples for each estimate [default: 100000].
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Near-surface band half-width [default: 2% of the union bounding-box diagonal].
    #[arg(long)]
    pub band: Option<f64>,
    #[arg(long)]
    pub threads: Option<usize>,
    #[serde(skip)]
    #[command(flatten)]
    pub common: Common,
}

impl RunCommand for IouArgs {
    const NAME: &'static str = "iou";
    common_impl!();

    fn defaults() -> Self {
        Self {
            samples: Some(100_000),
            seed: Some(0),
            threads: Some(0),
            ..Default::default()
        }
    }

    fn validate(&self) -> Result<()> {
        required(&self.a, "a")?;
        required(&self.b, "b")?;
        check_range(val(&self.samples), 1, usize::MAX, "samples")?;
        if let Some(band) = self.band {
            if !(band > 0.0 && band.is_finite()) {
                return Err(usage(format!("--band ({band}) must be positive")));
            }
        }
        Ok(())
    }

    fn execute(&mut self, report: &mut Report) -> Result<()> {
        let (pa, pb) = (required(&self.a, "a")?.clone(), required(&self.b, "b")?.clone());
        report.input("a", &pa);
        report.input("b", &pb);
        let (a, b) = (load_mesh(&pa)?, load_mesh(&pb)?);
        let (samples, seed) = (val(&self.samples), val(&self.seed));
        let band = *self.band.get_or_insert_with(|| default_band(&a, &b));
        let iou = report.timed("volume_iou", || volume_iou_meshes(&a, &b, samples, seed))?;
        let siou = report.timed("surface_iou", || surface_iou(&a, &b, band, samples, seed))?;
        report.metric("iou", iou);
        report.metric("surface_iou", siou);
        eprintln!("volume IoU {iou:.4}, surface IoU {siou:.4} (band {band:.4})");
        Ok(())
    }
}

/// Flags shared by select-views and pipeline.
fn validate_selection(atlas: usize, nmax: usize, nfixed: usize, cos: f64) -> Result<()> {
    check_range(atlas, 1, MAX_TEXTURE_SIZE, "atlas")?;
    if nfixed > nmax {
        return Err(usage(format!("--nfixed ({nfixed}) must not exceed --nmax ({nmax})")));
    }
    if nfixed > 4 {
        return Err(usage(format!("--nfixed ({nfixed}) must be at most 4, the number of orthogonal views")));
    }
    check_cos(cos)?;
    let framing = Framing {
        distance: 3.0,
        half_width: 1.0,
    };
    let fixed: Vec<Viewpoint> = orthogonal_views(framing).into_iter().take(nfixed).collect();
    let available = default_candidates(framing)
        .iter()
        .filter(|c| !fixed.iter().any(|f| f.same_direction(c)))
        .count();
    if nmax - nfixed > available {
        return Err(usage(format!(
            "--nmax ({nmax}) needs {} candidate views but only {available} are available",
            nmax - nfixed
        )));
    }
    Ok(())
}

fn select_views(mesh_path: &Path, atlas_size: usize, params: SelectParams, report: &mut Report) -> Result<Selection> {
    let mesh = load_textured_mesh(mesh_path, atlas_size, report)?;
    let bvh = Bvh::build(&mesh);
    let atlas = UvAtlas::rasterize(&mesh, atlas_size, atlas_size)?;
    let framing = Framing::for_mesh(&mesh);
    let candidates = default_candidates(framing);
    let sel = report.timed("select", || greedy_select(&candidates, framing, &mesh, &bvh, &atlas, params))?;

    let valid = sel.valid_texels.max(1) as f64;
    eprintln!("{:>4} {:>8} {:>9} {:>8} {:>8} {:>8}", "step", "azimuth", "elevation", "gain", "covered", "fraction");
    let n_fixed = params.n_fixed;
    if n_fixed > 0 {
        eprintln!("{:>4} {:>8} {:>9} {:>8} {:>8} {:>8.4}", "fix", "-", "-", "-", sel.covered[0], sel.covered[0] as f64 / valid);
    }
    for (i, view) in sel.views.selected[n_fixed..].iter().enumerate() {
        let c = sel.covered[i + 1];
        eprintln!(
            "{:>4} {:>8.1} {:>9.1} {:>8} {:>8} {:>8.4}",
            i + 1,
            view.azimuth,
            view.elevation,
            sel.gains[i],
            c,
            c as f64 / valid
        );
    }
    let views: Vec<[f64; 2]> = sel.views.selected.iter().map(|v| [v.azimuth, v.elevation]).collect();
    report.metric("selected_views", views);
    report.metric("gains", &sel.gains);
    report.metric("covered", &sel.covered);
    report.metric("valid_texels", sel.valid_texels);
    report.metric("coverage", *sel.covered.last().unwrap() as f64 / valid);
    Ok(sel)
}

#[derive(clap::Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct SelectViewsArgs {
    /// Input mesh; meshes without UVs get one chart per face.
    #[arg(long)]
    pub mesh: Option<PathBuf>,
    /// Atlas resolution used to count covered texels [default: 512].
    #[arg(long)]
    pub atlas: Option<usize>,
    /// Total number of views to select [default: 12].
    #[arg(long)]
    pub nmax: Option<usize>,
    /// Orthogonal views selected up front, at most 4 [default: 4].
    #[arg(long)]
    pub nfixed: Option<usize>,
    /// Minimum cosine between texel normal and view direction [default: 0.2].
    #[arg(long)]
    pub cos_threshold: Option<f64>,
    /// Output views JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub threads: Option<usize>,
    #[serde(skip)]
    #[command(flatten)]
    pub common: Common,
}

impl RunCommand for SelectViewsArgs {
    const NAME: &'static str = "select-views";
    common_impl!();

    fn defaults() -> Self {
        Self {
            atlas: Some(512),
            nmax: Some(crate::views::DEFAULT_N_MAX),
            nfixed: Some(crate::views::DEFAULT_N_FIXED),
            cos_threshold: Some(DEFAULT_COS_THRESHOLD),
            threads: Some(0),
            ..Default::default()
        }
    }

    fn validate(&self) -> Result<()> {
        required(&self.mesh, "mesh")?;
        required(&self.out, "out")?;
        validate_selection(val(&self.atlas), val(&self.nmax), val(&self.nfixed), val(&self.cos_threshold))
    }

    fn execute(&mut self, report: &mut Report) -> Result<()> {
        let (mesh, out) = (required(&self.mesh, "mesh")?.clone(), required(&self.out, "out")?.clone());
        report.input("mesh", &mesh);
        let params = SelectParams {
            n_fixed: val(&self.nfixed),
            n_max: val(&self.nmax),
            cos_threshold: val(&self.cos_threshold),
        };
        let sel = select_views(&mesh, val(&self.atlas), params, report)?;
        write_views(&sel.views.selected, &out)?;
        report.output("views", &out);
        Ok(())
    }
}

/// Loads one image per view from `dir`, upsampled by `factor`.
fn load_view_images(views: &[(Viewpoint, String)], dir: &Path, factor: usize) -> Result<MultiViewImages> {
    let mut out = Vec::with_capacity(views.len());
    for (view, name) in views {
        let path = dir.join(name);
        if !path.is_file() {
            return Err(CliError::Runtime(format!("missing view image {}", path.display())));
        }
        let image = Image::load_png(&path)?.upsample(factor)?;
        out.push(ViewImage { view: *view, image });
    }
    Ok(MultiViewImages::new(out)?)
}

fn validate_bake(size: usize, upsample: usize, exponent: i32, cos: f64) -> Result<()> {
    check_range(size, 1, MAX_TEXTURE_SIZE, "size")?;
    check_range(upsample, 1, 16, "upsample")?;
    check_range(exponent, 0, 64, "weight-exponent")?;
    check_cos(cos)
}

fn bake_texture(
    mesh: &TriMesh,
    size: usize,
    views: &MultiViewImages,
    params: BakeParams,
    report: &mut Report,
) -> Result<(UvAtlas, TextureMap)> {
    let bvh = Bvh::build(mesh);
    let atlas = UvAtlas::rasterize(mesh, size, size)?;
    let tex = report.timed("bake", || bake(&atlas, mesh, &bvh, views, params));
    report.metric("valid_texels", atlas.valid_count());
    report.metric("baked_texels", tex.covered_count());
    report.metric("bake_coverage", tex.covered_count() as f64 / atlas.valid_count().max(1) as f64);
    Ok((atlas, tex))
}

#[derive(clap::Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct BakeArgs {
    /// Input mesh; meshes without UVs get one chart per face.
    #[arg(long)]
    pub mesh: Option<PathBuf>,
    /// Views JSON; each entry may name its image in an "image" field.
    #[arg(long)]
    pub views: Option<PathBuf>,
    /// Directory holding the view images (default names az<az>_el<el>.png).
    #[arg(long)]
    pub images: Option<PathBuf>,
    /// Texture resolution [default: 1024].
    #[arg(long)]
    pub size: Option<usize>,
    /// Output texture PNG.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Output coverage mask PNG [default: <out>_mask.png].
    #[arg(long)]
    pub mask: Option<PathBuf>,
    /// Integer bilinear upsampling of the view images before baking [default: 1].
    #[arg(long)]
    pub upsample: Option<usize>,
    /// Minimum cosine between texel normal and view direction [default: 0.2].
    #[arg(long)]
    pub cos_threshold: Option<f64>,
    /// Exponent k of the cos^k view weights [default: 4].
    #[arg(long)]
    pub weight_exponent: Option<i32>,
    #[arg(long)]
    pub threads: Option<usize>,
    #[serde(skip)]
    #[command(flatten)]
    pub common: Common,
}

impl RunCommand for BakeArgs {
    const NAME: &'static str = "bake";
    common_impl!();

    fn defaults() -> Self {
        Self {
            size: Some(1024),
            upsample: Some(1),
            cos_threshold: Some(DEFAULT_COS_THRESHOLD),
            weight_exponent: Some(crate::texture::DEFAULT_WEIGHT_EXPONENT),
            threads: Some(0),
            ..Default::default()
        }
    }

    fn validate(&self) -> Result<()> {
        for (v, flag) in [(&self.mesh, "mesh"), (&self.views, "views"), (&self.images, "images"), (&self.out, "out")] {
            required(v, flag)?;
        }
        validate_bake(val(&self.size), val(&self.upsample), val(&self.weight_exponent), val(&self.cos_threshold))
    }

    fn execute(&mut self, report: &mut Report) -> Result<()> {
        let mesh_path = required(&self.mesh, "mesh")?.clone();
        let views_path = required(&self.views, "views")?.clone();
        let images = required(&self.images, "images")?.clone();
        let out = required(&self.out, "out")?.clone();
        let mask = self.mask.get_or_insert_with(|| sibling(&out, "mask")).clone();
        let size = val(&self.size);
        report.input("mesh", &mesh_path);
        report.input("views", &views_path);
        report.input("images", &images);

        let mesh = load_textured_mesh(&mesh_path, size, report)?;
        let records: Vec<(Viewpoint, String)> = read_views(&views_path)?
            .into_iter()
            .map(|r| (r.view, r.image_name()))
            .collect();
        let views = report.timed("load_images", || load_view_images(&records, &images, val(&self.upsample)))?;
        let params = BakeParams {
            cos_threshold: val(&self.cos_threshold),
            weight_exponent: val(&self.weight_exponent),
        };
        let (_, tex) = bake_texture(&mesh, size, &views, params, report)?;
        tex.save_png(&out)?;
        tex.save_mask_png(&mask)?;
        report.output("texture", &out);
        report.output("mask", &mask);
        eprintln!("baked {} views into {}", records.len(), out.display());
        Ok(())
    }
}

fn inpaint_texture(mesh: &TriMesh, atlas: &UvAtlas, tex: &TextureMap, report: &mut Report) -> Result<TextureMap> {
    let filled = report.timed("inpaint", || inpaint(mesh, atlas, tex))?;
    report.metric("covered_before", tex.covered_count());
    report.metric("covered_after", filled.covered_count());
    Ok(filled)
}

#[derive(clap::Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct InpaintArgs {
    /// Mesh the texture belongs to.
    #[arg(long)]
    pub mesh: Option<PathBuf>,
    /// Baked texture PNG.
    #[arg(long)]
    pub texture: Option<PathBuf>,
    /// Coverage mask PNG [default: <texture>_mask.png].
    #[arg(long)]
    pub mask: Option<PathBuf>,
    /// Output texture PNG.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub threads: Option<usize>,
    #[serde(skip)]
    #[command(flatten)]
    pub common: Common,
}

impl RunCommand for InpaintArgs {
    const NAME: &'static str = "inpaint";
    common_impl!();

    fn defaults() -> Self {
        Self {
            threads: Some(0),
            ..Default::default()
        }
    }

    fn validate(&self) -> Result<()> {
        required(&self.mesh, "mesh")?;
        required(&self.texture, "texture")?;
        required(&self.out, "out")?;
        Ok(())
    }

    fn execute(&mut self, report: &mut Report) -> Result<()> {
        let mesh_path = required(&self.mesh, "mesh")?.clone();
        let tex_path = required(&self.texture, "texture")?.clone();
        let out = required(&self.out, "out")?.clone();
        let mask = self.mask.get_or_insert_with(|| sibling(&tex_path, "mask")).clone();
        report.input("mesh", &mesh_path);
        report.input("texture", &tex_path);
        report.input("mask", &mask);
        let image = Image::load_png(&tex_path)?;
        let mesh = load_textured_mesh(&mesh_path, image.width(), report)?;
        let atlas = UvAtlas::rasterize(&mesh, image.width(), image.height())?;
        let mut tex = TextureMap::from_image(&image, &atlas)?;
        if !mask.is_file() {
            return Err(CliError::Runtime(format!("missing coverage mask {}", mask.display())));
        }
        tex.apply_mask_png(&mask)?;
        report.metric("valid_texels", atlas.valid_count());
        let filled = inpaint_texture(&mesh, &atlas, &tex, report)?;
        filled.save_png(&out)?;
        report.output("texture", &out);
        eprintln!("filled {} texels", filled.covered_count() - tex.covered_count());
        Ok(())
    }
}

#[derive(clap::Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct LowpolyArgs {
    /// Dense textured mesh.
    #[arg(long)]
    pub mesh: Option<PathBuf>,
    /// Fully covered texture of the dense mesh (run inpaint first).
    #[arg(long)]
    pub texture: Option<PathBuf>,
    /// Face budget of the simplified mesh, at least 2 [default: 500].
    #[arg(long)]
    pub target_faces: Option<usize>,
    /// Output OBJ with per-face UV charts.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Output texture PNG of the simplified mesh.
    #[arg(long)]
    pub out_texture: Option<PathBuf>,
    /// Resolution of the output texture [default: input texture width].
    #[arg(long)]
    pub size: Option<usize>,
    #[arg(long)]
    pub threads: Option<usize>,
    #[serde(skip)]
    #[command(flatten)]
    pub common: Common,
}

impl RunCommand for LowpolyArgs {
    const NAME: &'static str = "lowpoly";
    common_impl!();

    fn defaults() -> Self {
        Self {
            target_faces: Some(500),
            threads: Some(0),
            ..Default::default()
        }
    }

    fn validate(&self) -> Result<()> {
        for (v, flag) in [(&self.mesh, "mesh"), (&self.texture, "texture"), (&self.out, "out"), (&self.out_texture, "out-texture")] {
            required(v, flag)?;
        }
        let min = crate::lowpoly::qem::MIN_TARGET_FACES;
        check_range(val(&self.target_faces), min, usize::MAX, "target-faces")?;
        if let Some(size) = self.size {
            check_range(size, 1, MAX_TEXTURE_SIZE, "size")?;
        }
        Ok(())
    }

    fn execute(&mut self, report: &mut Report) -> Result<()> {
        let mesh_path = required(&self.mesh, "mesh")?.clone();
        let tex_path = required(&self.texture, "texture")?.clone();
        let out = required(&self.out, "out")?.clone();
        let out_tex = required(&self.out_texture, "out-texture")?.clone();
        report.input("mesh", &mesh_path);
        report.input("texture", &tex_path);
        let image = Image::load_png(&tex_path)?;
        let size = *self.size.get_or_insert(image.width());
        let dense = load_textured_mesh(&mesh_path, image.width(), report)?;
        let atlas = UvAtlas::rasterize(&dense, image.width(), image.height())?;
        let tex = TextureMap::from_image(&image, &atlas)?;

        let low = report.timed("decimate", || qem_decimate(&dense, val(&self.target_faces)))?;
        let colors = report.timed("transfer", || transfer_texture(&dense, &atlas, &tex, &low))?;
        let rebake = report.timed("rebake", || rebake_lowpoly(&low, &colors, size, true))?;
        save_obj(&rebake.mesh, &out)?;
        rebake.texture.save_png(&out_tex)?;
        report.output("mesh", &out);
        report.output("texture", &out_tex);
        report.metric("input_faces", dense.face_count());
        report.metric("output_faces", low.face_count());
        report.metric("output_vertices", low.vertex_count());
        report.metric("edge_manifold", low.is_edge_manifold());
        report.metric("watertight", low.is_watertight());
        report.metric("textured_vertices", colors.textured_count());
        eprintln!("{} -> {} faces, wrote {}", dense.face_count(), low.face_count(), out.display());
        Ok(())
    }
}

#[derive(clap::Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct FlowDemoArgs {
    /// Gradient steps [default: 500].
    #[arg(long)]
    pub steps: Option<usize>,
    /// Learning rate [default: 0.05].
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Training pairs per step [default: 256].
    #[arg(long)]
    pub batch: Option<usize>,
    /// Hidden width [default: 32].
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Euler steps used to push noise through the trained field [default: 8].
    #[arg(long)]
    pub euler_steps: Option<usize>,
    /// Noise samples pushed through the field [default: 10000].
    #[arg(long)]
    pub samples: Option<usize>,
    /// Size of the fixed batch used for the initial and final loss [default: 1024].
    #[arg(long)]
    pub eval_samples: Option<usize>,
    /// Output JSON with the loss curve and endpoint statistics.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub threads: Option<usize>,
    #[serde(skip)]
    #[command(flatten)]
    pub common: Common,
}

impl FlowDemoArgs {
    fn params(&self) -> FlowDemoParams {
        FlowDemoParams {
            steps: val(&self.steps),
            learning_rate: val(&self.lr),
            seed: val(&self.seed),
            batch_size: val(&self.batch),
            hidden: val(&self.hidden),
            eval_samples: val(&self.eval_samples),
            endpoint_samples: val(&self.samples),
            euler_steps: val(&self.euler_steps),
            ..FlowDemoParams::default()
        }
    }
}

impl RunCommand for FlowDemoArgs {
    const NAME: &'static str = "flow-demo";
    common_impl!();

    fn defaults() -> Self {
        let d = FlowDemoParams::default();
        Self {
            steps: Some(d.steps),
            lr: Some(d.learning_rate),
            seed: Some(d.seed),
            batch: Some(d.batch_size),
            hidden: Some(d.hidden),
            euler_steps: Some(d.euler_steps),
            samples: Some(d.endpoint_samples),
            eval_samples: Some(d.eval_samples),
            threads: Some(0),
            ..Default::default()
        }
    }

    fn validate(&self) -> Result<()> {
        for (v, flag) in [
            (&self.steps, "steps"),
            (&self.batch, "batch"),
            (&self.hidden, "hidden"),
            (&self.euler_steps, "euler-steps"),
            (&self.samples, "samples"),
            (&self.eval_samples, "eval-samples"),
        ] {
            check_range(val(v), 1, 10_000_000, flag)?;
        }
        let lr = val(&self.lr);
        if !(lr >= 0.0 && lr.is_finite()) {
            return Err(usage(format!("--lr ({lr}) must be a non-negative number")));
        }
        Ok(())
    }

    fn execute(&mut self, report: &mut Report) -> Result<()> {
        let demo = report.timed("train", || run_flow_demo(&self.params()))?;
        report.metric("initial_loss", demo.initial_loss);
        report.metric("final_loss", demo.final_loss);
        report.metric("loss_ratio", demo.final_loss / demo.initial_loss);
        report.metric("endpoint_mean", demo.endpoint_mean);
        report.metric("endpoint_std", demo.endpoint_std);
        report.metric("loss_curve", &demo.loss_curve);
        if let Some(out) = &self.out {
            std::fs::write(out, serde_json::to_string_pretty(&demo)? + "\n")?;
            report.output("result", out);
        }
        eprintln!(
            "loss {:.5} -> {:.5}, endpoint mean ({:.4}, {:.4})",
            demo.initial_loss, demo.final_loss, demo.endpoint_mean[0], demo.endpoint_mean[1]
        );
        Ok(())
    }
}

#[derive(clap::Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct AttnCheckArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    /// Random problems to check [default: 100].
    #[arg(long)]
    pub trials: Option<usize>,
    /// Query tokens per problem [default: 16].
    #[arg(long)]
    pub tokens: Option<usize>,
    /// Token width [default: 8].
    #[arg(long)]
    pub dim: Option<usize>,
    /// Output JSON with the check results.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub threads: Option<usize>,
    #[serde(skip)]
    #[command(flatten)]
    pub common: Common,
}

impl RunCommand for AttnCheckArgs {
    const NAME: &'static str = "attn-check";
    common_impl!();

    fn defaults() -> Self {
        Self {
            seed: Some(0),
            trials: Some(100),
            tokens: Some(16),
            dim: Some(8),
            threads: Some(0),
            ..Default::default()
        }
    }

    fn validate(&self) -> Result<()> {
        check_range(val(&self.trials), 1, 1_000_000, "trials")?;
        check_range(val(&self.tokens), 1, 4096, "tokens")?;
        check_range(val(&self.dim), 1, 4096, "dim")
    }

    fn execute(&mut self, report: &mut Report) -> Result<()> {
        let check = report.timed("check", || {
            check_attention_properties(val(&self.seed), val(&self.trials), val(&self.tokens), val(&self.dim))
        })?;
        report.metric("identity_exact", check.identity_exact);
        report.metric("max_row_sum_error", check.max_row_sum_error);
        report.metric("max_linearity_error", check.max_linearity_error);
        report.metric("passed", check.passed());
        if let Some(out) = &self.out {
            std::fs::write(out, serde_json::to_string_pretty(&check)? + "\n")?;
            report.output("result", out);
        }
        eprintln!(
            "identity exact: {}, row-sum error {:.3e}, linearity error {:.3e}",
            check.identity_exact, check.max_row_sum_error, check.max_linearity_error
        );
        if !check.passed() {
            return Err(CliError::Runtime("attention kernel properties failed".into()));
        }
        Ok(())
    }
}

#[derive(clap::Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct PipelineArgs {
    /// Input mesh; meshes without UVs get one chart per face.
    #[arg(long)]
    pub mesh: Option<PathBuf>,
    /// Directory with one image per candidate view, named az<az>_el<el>.png.
    #[arg(long)]
    pub images: Option<PathBuf>,
    /// Directory for views.json, texture_baked.png, texture_baked_mask.png and texture.png.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Atlas resolution used for view selection [default: 512].
    #[arg(long)]
    pub atlas: Option<usize>,
    /// Total number of views [default: 12].
    #[arg(long)]
    pub nmax: Option<usize>,
    /// Orthogonal views selected up front [default: 4].
    #[arg(long)]
    pub nfixed: Option<usize>,
    /// Minimum cosine between texel normal and view direction [default: 0.2].
    #[arg(long)]
    pub cos_threshold: Option<f64>,
    /// Texture resolution [default: 1024].
    #[arg(long)]
    pub size: Option<usize>,
    /// Integer bilinear upsampling of the view images [default: 1].
    #[arg(long)]
    pub upsample: Option<usize>,
    /// Exponent k of the cos^k view weights [default: 4].
    #[arg(long)]
    pub weight_exponent: Option<i32>,
    #[arg(long)]
    pub threads: Option<usize>,
    #[serde(skip)]
    #[command(flatten)]
    pub common: Common,
}

impl RunCommand for PipelineArgs {
    const NAME: &'static str = "pipeline";
    common_impl!();

    fn defaults() -> Self {
        Self {
            atlas: Some(512),
            nmax: Some(crate::views::DEFAULT_N_MAX),
            nfixed: Some(crate::views::DEFAULT_N_FIXED),
            cos_threshold: Some(DEFAULT_COS_THRESHOLD),
            size: Some(1024),
            upsample: Some(1),
            weight_exponent: Some(crate::texture::DEFAULT_WEIGHT_EXPONENT),
            threads: Some(0),
            ..Default::default()
        }
    }

    fn validate(&self) -> Result<()> {
        for (v, flag) in [(&self.mesh, "mesh"), (&self.images, "images"), (&self.out_dir, "out-dir")] {
            required(v, flag)?;
        }
        let cos = val(&self.cos_threshold);
        validate_selection(val(&self.atlas), val(&self.nmax), val(&self.nfixed), cos)?;
        validate_bake(val(&self.size), val(&self.upsample), val(&self.weight_exponent), cos)
    }

    fn execute(&mut self, report: &mut Report) -> Result<()> {
        let mesh_path = required(&self.mesh, "mesh")?.clone();
        let images = required(&self.images, "images")?.clone();
        let out_dir = required(&self.out_dir, "out-dir")?.clone();
        report.input("mesh", &mesh_path);
        report.input("images", &images);
        std::fs::create_dir_all(&out_dir)?;

        let cos_threshold = val(&self.cos_threshold);
        let params = SelectParams {
            n_fixed: val(&self.nfixed),
            n_max: val(&self.nmax),
            cos_threshold,
        };
        let sel = select_views(&mesh_path, val(&self.atlas), params, report)?;
        let views_path = out_dir.join("views.json");
        write_views(&sel.views.selected, &views_path)?;
        report.output("views", &views_path);

        let size = val(&self.size);
        let mesh = load_textured_mesh(&mesh_path, size, report)?;
        let records: Vec<(Viewpoint, String)> = sel
            .views
            .selected
            .iter()
            .map(|v| (*v, default_image_name(v)))
            .collect();
        let views = report.timed("load_images", || load_view_images(&records, &images, val(&self.upsample)))?;
        let bake_params = BakeParams {
            cos_threshold,
            weight_exponent: val(&self.weight_exponent),
        };
        let (atlas, baked) = bake_texture(&mesh, size, &views, bake_params, report)?;
        let (baked_path, mask_path) = (out_dir.join("texture_baked.png"), out_dir.join("texture_baked_mask.png"));
        baked.save_png(&baked_path)?;
        baked.save_mask_png(&mask_path)?;
        report.output("baked_texture", &baked_path);
        report.output("mask", &mask_path);

        let filled = inpaint_texture(&mesh, &atlas, &baked, report)?;
        let tex_path = out_dir.join("texture.png");
        filled.save_png(&tex_path)?;
        report.output("texture", &tex_path);
        eprintln!("wrote {}", tex_path.display());
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sibling_names() {
        assert_eq!(sibling(Path::new("a/tex.png"), "mask"), PathBuf::from("a/tex_mask.png"));
    }

    #[test]
    fn selection_validation_names_flags() {
        let err = validate_selection(512, 3, 4, 0.2).unwrap_err();
        assert!(err.to_string().contains("--nfixed") && err.to_string().contains("--nmax"));
        assert!(validate_selection(512, 12, 4, 0.2).is_ok());
        assert!(validate_selection(512, 44, 4, 0.2).is_ok());
        assert!(validate_selection(512, 45, 4, 0.2).is_err());
        assert!(validate_selection(512, 12, 4, 1.0).is_err());
    }

    #[test]
    fn fps_split_is_even() {
        let args = SampleArgs {
            fps: Some(1025),
            ..SampleArgs::defaults()
        };
        assert_eq!(args.fps_split(), (513, 512));
    }
}
