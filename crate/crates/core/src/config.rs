//! Declarative TOML model description.
//!
//! ```toml
//! [atomic]
//! matrix = [[0.0, 0.0], [0.0, 1.0]]     # real part, row major
//! # matrix_im = [[...]]                 # optional imaginary part
//!
//! [modes]
//! frequencies = [0.5]                   # or: geometric = { top = 0.9, ratio = 0.25, count = 10 }
//! weights = [1.0]                       # optional; Riemann weights when absent
//! uv_cutoff = 1.0                       # optional; defaults to the largest frequency
//!
//! [[interaction.linear]]                # G10 for the listed modes (all when omitted)
//! modes = [0]
//! re = [[0.0, 0.1], [0.1, 0.0]]
//!
//! [[interaction.quadratic]]             # kind "20" or "11" at mode pair (i, j)
//! kind = "11"
//! i = 0
//! j = 0
//! re = [[0.02, 0.0], [0.0, 0.01]]
//!
//! [parameters]
//! g = 0.01
//! n_max = 2
//! ```
//!
//! Missing `G11_ji` partners are filled in as adjoints of `G11_ij`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMat, C64};
use crate::model::{
    apply_ir_cutoff, default_powers, normalize_gap, AtomicPart, DiscretizedModel, InteractionSpec,
    PhotonModes,
};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub atomic: AtomicConfig,
    pub modes: ModesConfig,
    #[serde(default)]
    pub interaction: InteractionConfig,
    pub parameters: ParametersConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct AtomicConfig {
    pub matrix: Vec<Vec<f64>>,
    #[serde(default)]
    pub matrix_im: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GeometricGrid {
    pub top: f64,
    pub ratio: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ModesConfig {
    #[serde(default)]
    pub frequencies: Option<Vec<f64>>,
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
    #[serde(default)]
    pub geometric: Option<GeometricGrid>,
    #[serde(default)]
    pub uv_cutoff: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct InteractionConfig {
    #[serde(default)]
    pub linear: Vec<LinearTerm>,
    #[serde(default)]
    pub quadratic: Vec<QuadraticTerm>,
    #[serde(default)]
    pub powers: Option<PowersConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct LinearTerm {
    #[serde(default)]
    pub modes: Option<Vec<usize>>,
    pub re: Vec<Vec<f64>>,
    #[serde(default)]
    pub im: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct QuadraticTerm {
    pub kind: String,
    pub i: usize,
    pub j: usize,
    pub re: Vec<Vec<f64>>,
    #[serde(default)]
    pub im: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PowersConfig {
    pub linear: u32,
    pub quadratic: u32,
}

fn default_n_max() -> usize {
    2
}

fn default_disk() -> f64 {
    1.0
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ParametersConfig {
    #[serde(default)]
    pub g: f64,
    #[serde(default)]
    pub g_im: f64,
    #[serde(default)]
    pub sigma: f64,
    #[serde(default)]
    pub beta: f64,
    #[serde(default = "default_n_max")]
    pub n_max: usize,
    #[serde(default = "default_disk")]
    pub g_disk: f64,
    /// Rescale so the atomic gap is 1.
    #[serde(default = "default_true")]
    pub normalize: bool,
}

fn matrix(re: &[Vec<f64>], im: Option<&Vec<Vec<f64>>>, dim: Option<usize>) -> Result<CMat> {
    let n = re.len();
    if n == 0 || re.iter().any(|row| row.len() != n) {
        return Err(Error::Config("matrices must be square and nonempty".into()));
    }
    if let Some(d) = dim {
        if n != d {
            return Err(Error::Config(format!("matrix has dimension {n}, expected {d}")));
        }
    }
    if let Some(im) = im {
        if im.len() != n || im.iter().any(|row| row.len() != n) {
            return Err(Error::Config("imaginary part has wrong shape".into()));
        }
    }
    Ok(CMat::from_fn(n, n, |i, j| {
        C64::new(re[i][j], im.map(|m| m[i][j]).unwrap_or(0.0))
    }))
}

impl ModelConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    fn photon_modes(&self) -> Result<PhotonModes> {
        let m = &self.modes;
        match (&m.frequencies, &m.geometric) {
            (Some(f), None) => {
                let uv = m.uv_cutoff.unwrap_or_else(|| f.iter().cloned().fold(0.0, f64::max));
                match &m.weights {
                    Some(w) => PhotonModes::new(f.clone(), w.clone(), uv),
                    None => PhotonModes::riemann(f.clone(), uv),
                }
            }
            (None, Some(g)) => {
                if m.weights.is_some() {
                    return Err(Error::Config("geometric grids use Riemann weights".into()));
                }
                PhotonModes::geometric(g.top, g.ratio, g.count, m.uv_cutoff.unwrap_or(g.top))
            }
            _ => Err(Error::Config("give exactly one of modes.frequencies, modes.geometric".into())),
        }
    }

    /// Builds, validates, applies the infrared cutoff and, if requested,
    /// normalizes the gap. Returns the model and the gap scale.
    pub fn to_model_scaled(&self) -> Result<(DiscretizedModel, f64)> {
        let atomic = AtomicPart::new(matrix(&self.atomic.matrix, self.atomic.matrix_im.as_ref(), None)?)?;
        let d = atomic.dim();
        let modes = self.photon_modes()?;
        let mut inter = InteractionSpec::zero(modes.len(), d);
        for term in &self.interaction.linear {
            let g = matrix(&term.re, term.im.as_ref(), Some(d))?;
            let targets: Vec<usize> = term.modes.clone().unwrap_or_else(|| (0..modes.len()).collect());
            for i in targets {
                if i >= modes.len() {
                    return Err(Error::Config(format!("linear coupling references mode {i}")));
                }
                inter.linear[i] += &g;
            }
        }
        for term in &self.interaction.quadratic {
            let g = matrix(&term.re, term.im.as_ref(), Some(d))?;
            match term.kind.as_str() {
                "20" => {
                    *inter.quad20.entry((term.i, term.j)).or_insert_with(|| CMat::zeros(d, d)) += &g;
                }
                "11" => {
                    *inter.quad11.entry((term.i, term.j)).or_insert_with(|| CMat::zeros(d, d)) += &g;
                }
                other => return Err(Error::Config(format!("unknown quadratic kind {other:?}"))),
            }
        }
        let keys: Vec<(usize, usize)> = inter.quad11.keys().copied().collect();
        for (i, j) in keys {
            if !inter.quad11.contains_key(&(j, i)) {
                let adj = inter.quad11[&(i, j)].adjoint();
                inter.quad11.insert((j, i), adj);
            }
        }
        inter.coupling_power = default_powers();
        if let Some(p) = &self.interaction.powers {
            for k in [(1, 0), (0, 1)] {
                inter.coupling_power.insert(k, p.linear);
            }
            for k in [(2, 0), (1, 1), (0, 2)] {
                inter.coupling_power.insert(k, p.quadratic);
            }
        }
        let p = &self.parameters;
        let mut model = DiscretizedModel::new(atomic, modes, inter, p.n_max)?;
        model.beta = p.beta;
        model.g_disk = p.g_disk;
        let model = model.with_g(C64::new(p.g, p.g_im))?;
        let model = apply_ir_cutoff(&model, p.sigma)?;
        if p.normalize {
            normalize_gap(&model)
        } else {
            Ok((model, 1.0))
        }
    }

    pub fn to_model(&self) -> Result<DiscretizedModel> {
        self.to_model_scaled().map(|(m, _)| m)
    }
}
