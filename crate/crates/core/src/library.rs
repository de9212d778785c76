//! Synthetic standard-cell library with a linear delay/slew model.
//!
//! Arc delay is `d_intrinsic + r_drive * load + k_slew * slew_in` and output
//! slew is `s_intrinsic + r_slew * load`. Wires carry no delay; each fanout
//! adds a lumped `wire_cap_per_fanout` to the driver load.
//!
//! The canonical coefficients live in `data/cells-v1.toml` and are embedded at
//! build time so every experiment can cite the library version it ran with.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const LIBRARY_SCHEMA: u32 = 1;

const CANONICAL_LIBRARY: &str = include_str!("../data/cells-v1.toml");

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum CellFunction {
    Inv,
    Buf,
    And2,
    Or2,
    Nand2,
    Nor2,
    Xor2,
    Xnor2,
}

impl CellFunction {
    pub const ALL: [CellFunction; 8] = [
        CellFunction::Inv,
        CellFunction::Buf,
        CellFunction::And2,
        CellFunction::Or2,
        CellFunction::Nand2,
        CellFunction::Nor2,
        CellFunction::Xor2,
        CellFunction::Xnor2,
    ];

    pub fn input_count(self) -> usize {
        match self {
            CellFunction::Inv | CellFunction::Buf => 1,
            _ => 2,
        }
    }

    /// Boolean evaluation, used by the adder simulator.
    pub fn eval(self, inputs: &[bool]) -> bool {
        match self {
            CellFunction::Inv => !inputs[0],
            CellFunction::Buf => inputs[0],
            CellFunction::And2 => inputs[0] && inputs[1],
            CellFunction::Or2 => inputs[0] || inputs[1],
            CellFunction::Nand2 => !(inputs[0] && inputs[1]),
            CellFunction::Nor2 => !(inputs[0] || inputs[1]),
            CellFunction::Xor2 => inputs[0] ^ inputs[1],
            CellFunction::Xnor2 => !(inputs[0] ^ inputs[1]),
        }
    }

    fn index(self) -> usize {
        CellFunction::ALL.iter().position(|&f| f == self).unwrap()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Drive {
    X1,
    X2,
    X4,
}

impl Drive {
    pub const ALL: [Drive; 3] = [Drive::X1, Drive::X2, Drive::X4];

    /// Next stronger drive, if any.
    pub fn upsized(self) -> Option<Drive> {
        match self {
            Drive::X1 => Some(Drive::X2),
            Drive::X2 => Some(Drive::X4),
            Drive::X4 => None,
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellKind {
    pub function: CellFunction,
    pub drive: Drive,
}

impl CellKind {
    pub const COUNT: usize = CellFunction::ALL.len() * Drive::ALL.len();

    pub fn new(function: CellFunction, drive: Drive) -> Self {
        CellKind { function, drive }
    }

    /// Dense index in `0..CellKind::COUNT`, function-major.
    pub fn index(self) -> usize {
        self.function.index() * Drive::ALL.len() + self.drive.index()
    }

    pub fn upsized(self) -> Option<CellKind> {
        self.drive.upsized().map(|drive| CellKind { drive, ..self })
    }
}

impl fmt::Display for CellKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}_{:?}", self.function, self.drive)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSpec {
    #[serde(flatten)]
    pub kind: CellKind,
    pub area: f64,
    pub input_cap: f64,
    pub d_intrinsic: f64,
    pub r_drive: f64,
    pub k_slew: f64,
    pub s_intrinsic: f64,
    pub r_slew: f64,
}

impl CellSpec {
    fn coefficients(&self) -> [f64; 7] {
        [
            self.area,
            self.input_cap,
            self.d_intrinsic,
            self.r_drive,
            self.k_slew,
            self.s_intrinsic,
            self.r_slew,
        ]
    }
}

/// Arc delay under the linear model.
pub fn arc_delay(spec: &CellSpec, slew_in: f64, load: f64) -> Result<f64> {
    if !(slew_in >= 0.0) || !(load >= 0.0) {
        return Err(Error::Domain(format!(
            "arc_delay needs non-negative slew and load, got slew={slew_in} load={load}"
        )));
    }
    Ok(spec.d_intrinsic + spec.r_drive * load + spec.k_slew * slew_in)
}

/// Output transition time under the linear model.
pub fn arc_slew(spec: &CellSpec, load: f64) -> Result<f64> {
    if !(load >= 0.0) {
        return Err(Error::Domain(format!(
            "arc_slew needs a non-negative load, got {load}"
        )));
    }
    Ok(spec.s_intrinsic + spec.r_slew * load)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellLibrary {
    pub version: String,
    pub cells: BTreeMap<CellKind, CellSpec>,
    pub wire_cap_per_fanout: f64,
    pub default_input_slew: f64,
    pub default_output_load: f64,
}

#[derive(Serialize, Deserialize)]
struct LibraryFile {
    schema: u32,
    version: String,
    wire_cap_per_fanout: f64,
    default_input_slew: f64,
    default_output_load: f64,
    #[serde(rename = "cell")]
    cells: Vec<CellSpec>,
}

impl CellLibrary {
    pub fn spec(&self, kind: CellKind) -> Result<&CellSpec> {
        self.cells
            .get(&kind)
            .ok_or_else(|| Error::Library(format!("cell {kind} is not in library {}", self.version)))
    }

    /// Checks every structural and monotonicity invariant of the library.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Library(msg));
        for (kind, spec) in &self.cells {
            if spec.kind != *kind {
                return bad(format!("cell keyed {kind} describes {}", spec.kind));
            }
            if spec.coefficients().iter().any(|c| !(*c > 0.0) || !c.is_finite()) {
                return bad(format!("cell {kind} has a non-positive coefficient"));
            }
        }
        for function in CellFunction::ALL {
            let mut prev: Option<&CellSpec> = None;
            for drive in Drive::ALL {
                let Some(spec) = self.cells.get(&CellKind::new(function, drive)) else {
                    return bad(format!("missing cell {function:?}_{drive:?}"));
                };
                if let Some(p) = prev {
                    if !(spec.r_drive < p.r_drive) || !(spec.area > p.area) || spec.input_cap < p.input_cap {
                        return bad(format!(
                            "{} is not a strict upsizing of {}",
                            spec.kind, p.kind
                        ));
                    }
                    let load = self.default_output_load;
                    let slew = self.default_input_slew;
                    if !(arc_delay(spec, slew, load)? < arc_delay(p, slew, load)?) {
                        return bad(format!("{} is not faster than {}", spec.kind, p.kind));
                    }
                }
                prev = Some(spec);
            }
        }
        for (name, v) in [
            ("wire_cap_per_fanout", self.wire_cap_per_fanout),
            ("default_input_slew", self.default_input_slew),
            ("default_output_load", self.default_output_load),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return bad(format!("{name} must be finite and non-negative"));
            }
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct SchemaProbe {
            schema: u32,
        }
        let probe: SchemaProbe =
            toml::from_str(text).map_err(|e| Error::Parse(format!("library file: {e}")))?;
        if probe.schema != LIBRARY_SCHEMA {
            return Err(Error::Library(format!(
                "unsupported library schema {} (expected {LIBRARY_SCHEMA})",
                probe.schema
            )));
        }
        let file: LibraryFile =
            toml::from_str(text).map_err(|e| Error::Parse(format!("library file: {e}")))?;
        let mut cells = BTreeMap::new();
        for spec in file.cells {
            if cells.insert(spec.kind, spec).is_some() {
                return Err(Error::Library(format!("duplicate cell {}", spec.kind)));
            }
        }
        let lib = CellLibrary {
            version: file.version,
            cells,
            wire_cap_per_fanout: file.wire_cap_per_fanout,
            default_input_slew: file.default_input_slew,
            default_output_load: file.default_output_load,
        };
        lib.validate()?;
        Ok(lib)
    }

    pub fn to_toml_string(&self) -> String {
        let file = LibraryFile {
            schema: LIBRARY_SCHEMA,
            version: self.version.clone(),
            wire_cap_per_fanout: self.wire_cap_per_fanout,
            default_input_slew: self.default_input_slew,
            default_output_load: self.default_output_load,
            cells: self.cells.values().copied().collect(),
        };
        toml::to_string(&file).expect("library is always serializable")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_toml_string()).map_err(|e| Error::io(path, e))
    }

    /// Short content hash, stamped into every artifact derived from this library.
    pub fn fingerprint(&self) -> String {
        fingerprint_bytes(self.to_toml_string().as_bytes())
    }
}

pub(crate) fn fingerprint_bytes(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Seed 0 is the shipped canonical library. Other seeds scale each
/// coefficient of each function by a common factor in [0.85, 1.15), which
/// keeps the drive-strength ratios and therefore every library invariant.
pub fn default_library(seed: u64) -> CellLibrary {
    let mut lib = CellLibrary::from_toml_str(CANONICAL_LIBRARY).expect("canonical library is valid");
    if seed == 0 {
        return lib;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for function in CellFunction::ALL {
        let factors: [f64; 7] = std::array::from_fn(|_| rng.random_range(0.85..1.15));
        for drive in Drive::ALL {
            let spec = lib.cells.get_mut(&CellKind::new(function, drive)).unwrap();
            spec.area *= factors[0];
            spec.input_cap *= factors[1];
            spec.d_intrinsic *= factors[2];
            spec.r_drive *= factors[3];
            spec.k_slew *= factors[4];
            spec.s_intrinsic *= factors[5];
            spec.r_slew *= factors[6];
        }
    }
    lib.version = format!("{}+seed{seed}", lib.version);
    lib
}
