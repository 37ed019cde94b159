//! Ion species, target materials and beam parameters.
//!
//! Everything here is immutable after construction and is shared by
//! reference across transport workers.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Avogadro constant, 1/mol.
pub const AVOGADRO: f64 = 6.022_140_76e23;

const FRACTION_TOLERANCE: f64 = 1e-12;
const MAX_COMPONENTS: usize = 4;

/// Displacement threshold of the diamond preset, eV. The generic carbon
/// default of 28 eV is available through `diamond_with`.
pub const DIAMOND_DISPLACEMENT_ENERGY_EV: f64 = 37.5;

#[derive(Debug, Error, PartialEq)]
pub enum TargetError {
    #[error("atomic number must be >= 1, got {0}")]
    InvalidAtomicNumber(u32),
    #[error("atomic mass must be positive, got {0} u")]
    InvalidMass(f64),
    #[error("stoichiometric fractions sum to {0}, expected 1")]
    FractionSum(f64),
    #[error("target must have between 1 and {MAX_COMPONENTS} elements, got {0}")]
    ComponentCount(usize),
    #[error("{name} must be positive and finite, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("tilt angle must lie in [0, 90) degrees, got {0}")]
    InvalidTilt(f64),
    #[error("unknown ion species `{0}`")]
    UnknownSpecies(String),
}

fn require_positive(name: &'static str, value: f64) -> Result<f64, TargetError> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(TargetError::NonPositive { name, value })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Element {
    pub atomic_number: u32,
    /// Atomic mass in u.
    pub mass: f64,
}

impl Element {
    pub fn new(atomic_number: u32, mass: f64) -> Result<Self, TargetError> {
        if atomic_number < 1 {
            return Err(TargetError::InvalidAtomicNumber(atomic_number));
        }
        if !(mass.is_finite() && mass > 0.0) {
            return Err(TargetError::InvalidMass(mass));
        }
        Ok(Self {
            atomic_number,
            mass,
        })
    }

    pub fn z(&self) -> f64 {
        self.atomic_number as f64
    }

    /// Carbon-12 isotope.
    pub fn carbon12() -> Self {
        Self {
            atomic_number: 6,
            mass: 12.0,
        }
    }

    /// Nitrogen-15 isotope.
    pub fn nitrogen15() -> Self {
        Self {
            atomic_number: 7,
            mass: 15.000_108_9,
        }
    }

    /// Natural-abundance carbon, as found in a diamond lattice.
    pub fn carbon_natural() -> Self {
        Self {
            atomic_number: 6,
            mass: 12.011,
        }
    }

    /// Parses species labels such as `12C`, `C12`, `15N`, `N15`.
    pub fn from_label(label: &str) -> Result<Self, TargetError> {
        let cleaned: String = label
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_uppercase();
        match cleaned.as_str() {
            "12C" | "C12" | "C" => Ok(Self::carbon12()),
            "15N" | "N15" | "N" => Ok(Self::nitrogen15()),
            _ => Err(TargetError::UnknownSpecies(label.to_string())),
        }
    }

    pub fn label(&self) -> String {
        let symbol = match self.atomic_number {
            1 => "H",
            2 => "He",
            5 => "B",
            6 => "C",
            7 => "N",
            8 => "O",
            14 => "Si",
            _ => return format!("Z{}A{:.0}", self.atomic_number, self.mass),
        };
        format!("{}{}", self.mass.round() as u32, symbol)
    }
}

/// One element of a (possibly compound) target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub element: Element,
    pub fraction: f64,
    /// Displacement threshold in eV.
    pub displacement_energy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetMaterial {
    components: Vec<Component>,
    /// g/cm^3
    mass_density: f64,
    /// eV, subtracted from every displaced recoil.
    lattice_binding_energy: f64,
    /// eV
    surface_binding_energy: f64,
}

impl TargetMaterial {
    pub fn new(
        components: Vec<Component>,
        mass_density: f64,
        lattice_binding_energy: f64,
        surface_binding_energy: f64,
    ) -> Result<Self, TargetError> {
        if components.is_empty() || components.len() > MAX_COMPONENTS {
            return Err(TargetError::ComponentCount(components.len()));
        }
        let sum: f64 = components.iter().map(|c| c.fraction).sum();
        if (sum - 1.0).abs() > FRACTION_TOLERANCE {
            return Err(TargetError::FractionSum(sum));
        }
        for c in &components {
            Element::new(c.element.atomic_number, c.element.mass)?;
            require_positive("stoichiometric fraction", c.fraction)?;
            require_positive("displacement energy", c.displacement_energy)?;
        }
        require_positive("mass density", mass_density)?;
        require_positive("lattice binding energy", lattice_binding_energy)?;
        require_positive("surface binding energy", surface_binding_energy)?;
        Ok(Self {
            components,
            mass_density,
            lattice_binding_energy,
            surface_binding_energy,
        })
    }

    /// Amorphous diamond: 3.515 g/cm^3, Ed = 37.5 eV, Eb = 3 eV, Es = 7.41 eV.
    pub fn diamond() -> Self {
        Self::diamond_with(3.515, DIAMOND_DISPLACEMENT_ENERGY_EV, 3.0, 7.41)
            .expect("diamond preset is valid")
    }

    pub fn diamond_with(density: f64, ed: f64, eb: f64, es: f64) -> Result<Self, TargetError> {
        Self::new(
            vec![Component {
                element: Element::carbon_natural(),
                fraction: 1.0,
                displacement_energy: ed,
            }],
            density,
            eb,
            es,
        )
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn mass_density(&self) -> f64 {
        self.mass_density
    }

    pub fn lattice_binding_energy(&self) -> f64 {
        self.lattice_binding_energy
    }

    pub fn surface_binding_energy(&self) -> f64 {
        self.surface_binding_energy
    }

    /// Fraction-weighted mean atomic mass, u.
    pub fn mean_mass(&self) -> f64 {
        self.components
            .iter()
            .map(|c| c.fraction * c.element.mass)
            .sum()
    }

    /// Fraction-weighted mean atomic number.
    pub fn mean_z(&self) -> f64 {
        self.components
            .iter()
            .map(|c| c.fraction * c.element.z())
            .sum()
    }

    /// Smallest displacement threshold among the components, eV.
    pub fn min_displacement_energy(&self) -> f64 {
        self.components
            .iter()
            .map(|c| c.displacement_energy)
            .fold(f64::INFINITY, f64::min)
    }

    /// Atoms per nm^3.
    pub fn atomic_density_per_nm3(&self) -> f64 {
        atomic_density(self) * 1e-21
    }
}

/// Atomic number density in atoms/cm^3.
pub fn atomic_density(material: &TargetMaterial) -> f64 {
    material.mass_density * AVOGADRO / material.mean_mass()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IonBeam {
    pub ion: Element,
    /// Stored for provenance only; transport ignores it.
    pub charge_state: i32,
    /// keV
    pub energy: f64,
    /// ions/cm^2
    pub fluence: f64,
    /// Degrees from the surface normal.
    pub tilt_angle: f64,
}

impl IonBeam {
    pub fn new(
        ion: Element,
        charge_state: i32,
        energy: f64,
        fluence: f64,
        tilt_angle: f64,
    ) -> Result<Self, TargetError> {
        require_positive("beam energy", energy)?;
        require_positive("fluence", fluence)?;
        if !(tilt_angle.is_finite() && (0.0..90.0).contains(&tilt_angle)) {
            return Err(TargetError::InvalidTilt(tilt_angle));
        }
        Ok(Self {
            ion,
            charge_state,
            energy,
            fluence,
            tilt_angle,
        })
    }

    /// Singly charged ion at 7 degrees tilt, with the fluence used for
    /// that energy in the shallow (12 keV) and deep (50/55 keV) recipes.
    pub fn preset(ion: Element, energy_kev: f64) -> Result<Self, TargetError> {
        let fluence = if energy_kev < 30.0 { 1e10 } else { 5e8 };
        Self::new(ion, 1, energy_kev, fluence, 7.0)
    }

    pub fn carbon_12kev() -> Self {
        Self::preset(Element::carbon12(), 12.0).expect("valid preset")
    }

    pub fn carbon_50kev() -> Self {
        Self::preset(Element::carbon12(), 50.0).expect("valid preset")
    }

    pub fn carbon_55kev() -> Self {
        Self::preset(Element::carbon12(), 55.0).expect("valid preset")
    }

    pub fn nitrogen_12kev() -> Self {
        Self::preset(Element::nitrogen15(), 12.0).expect("valid preset")
    }

    pub fn nitrogen_50kev() -> Self {
        Self::preset(Element::nitrogen15(), 50.0).expect("valid preset")
    }

    pub fn nitrogen_55kev() -> Self {
        Self::preset(Element::nitrogen15(), 55.0).expect("valid preset")
    }

    /// Energy in eV.
    pub fn energy_ev(&self) -> f64 {
        self.energy * 1e3
    }
}

/// `[beam]` section of the run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeamSection {
    pub ion: String,
    pub energy_kev: f64,
    #[serde(default)]
    pub fluence_per_cm2: Option<f64>,
    #[serde(default)]
    pub tilt_deg: Option<f64>,
}

/// `[target]` section of the run configuration. The composition is diamond;
/// only densities and thresholds are adjustable.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSection {
    #[serde(default)]
    pub density_g_cm3: Option<f64>,
    #[serde(default)]
    pub ed_ev: Option<f64>,
    #[serde(default)]
    pub eb_ev: Option<f64>,
    #[serde(default)]
    pub es_ev: Option<f64>,
}

impl BeamSection {
    pub fn to_beam(&self) -> Result<IonBeam, TargetError> {
        let ion = Element::from_label(&self.ion)?;
        let preset = IonBeam::preset(ion, self.energy_kev)?;
        IonBeam::new(
            ion,
            1,
            self.energy_kev,
            self.fluence_per_cm2.unwrap_or(preset.fluence),
            self.tilt_deg.unwrap_or(preset.tilt_angle),
        )
    }
}

impl TargetSection {
    pub fn to_material(&self) -> Result<TargetMaterial, TargetError> {
        let d = TargetMaterial::diamond();
        TargetMaterial::diamond_with(
            self.density_g_cm3.unwrap_or(d.mass_density),
            self.ed_ev.unwrap_or(d.components[0].displacement_energy),
            self.eb_ev.unwrap_or(d.lattice_binding_energy),
            self.es_ev.unwrap_or(d.surface_binding_energy),
        )
    }
}
