use std::f64::consts::PI;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::potential::{
    closest_approach, magic_with_turning_point, reduced_energy, scattering_angle_quadrature,
    screening_length, MagicCoefficients,
};
use super::stopping::{damage_energy, lindhard_scharff_k, nrt_displacements};
use super::BcaError;
use crate::rng::RngStream;
use crate::target::{Element, IonBeam, TargetMaterial};

/// Moving particles below this energy stop in place, eV.
pub const LOW_ENERGY_CUTOFF_EV: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DamageMode {
    /// Follow every displaced recoil.
    FullCascade,
    /// Follow only the ion; estimate recoil damage with the NRT formula.
    KinchinPease,
}

impl FromStr for DamageMode {
    type Err = BcaError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "cascade" | "full-cascade" | "full" => Ok(Self::FullCascade),
            "kp" | "kinchin-pease" | "nrt" => Ok(Self::KinchinPease),
            _ => Err(BcaError::InvalidMode(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DamagePartition {
    /// Robinson fit to the Lindhard partition.
    Robinson,
    /// Use the full recoil energy as damage energy.
    Direct,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScatteringKernel {
    Magic,
    Quadrature,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransportOptions {
    pub mode: DamageMode,
    pub partition: DamagePartition,
    pub kernel: ScatteringKernel,
    /// Count a displacement as a replacement (no vacancy) when the
    /// projectile is left below threshold at a site of its own species.
    pub replacement_collisions: bool,
}

impl TransportOptions {
    pub fn new(mode: DamageMode) -> Self {
        Self {
            mode,
            partition: DamagePartition::Robinson,
            kernel: ScatteringKernel::Magic,
            replacement_collisions: true,
        }
    }
}

impl Default for TransportOptions {
    fn default() -> Self {
        Self::new(DamageMode::FullCascade)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollisionEvent {
    /// nm below the surface
    pub depth: f64,
    /// eV
    pub energy_transferred: f64,
    pub recoil_displaced: bool,
    /// Vacancies represented by this event: 1 in cascade mode, the NRT
    /// estimate in Kinchin-Pease mode.
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FinalPosition {
    Stopped { depth: f64 },
    Backscattered,
    Transmitted,
}

impl FinalPosition {
    pub fn depth(&self) -> Option<f64> {
        match self {
            Self::Stopped { depth } => Some(*depth),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeRecord {
    pub ion_index: u64,
    pub final_position: FinalPosition,
    pub vacancies: Vec<CollisionEvent>,
    /// eV
    pub initial_energy: f64,
    pub energy_to_electrons: f64,
    /// Sub-threshold transfers, lattice binding and stopped-particle
    /// residues, eV.
    pub energy_to_phonons: f64,
    /// Carried out of the slab by escaping particles, eV.
    pub energy_escaped: f64,
}

impl CascadeRecord {
    pub fn vacancy_count(&self) -> f64 {
        self.vacancies.iter().map(|v| v.weight).sum()
    }

    /// Relative energy imbalance of the cascade.
    pub fn energy_balance_error(&self) -> f64 {
        let out = self.energy_to_electrons + self.energy_to_phonons + self.energy_escaped;
        (out - self.initial_energy).abs() / self.initial_energy
    }
}

struct Particle {
    element: Element,
    energy: f64,
    pos: [f64; 3],
    dir: [f64; 3],
    primary: bool,
    fresh: bool,
}

/// Rotates unit vector `d` by polar angle `psi` about its own direction,
/// at azimuth `phi`.
fn rotate(d: [f64; 3], psi: f64, phi: f64) -> [f64; 3] {
    // Build an orthonormal pair perpendicular to d from the axis that d is
    // least aligned with.
    let axis = if d[0].abs() <= d[1].abs() && d[0].abs() <= d[2].abs() {
        [1.0, 0.0, 0.0]
    } else if d[1].abs() <= d[2].abs() {
        [0.0, 1.0, 0.0]
    } else {
        [0.0, 0.0, 1.0]
    };
    let mut e1 = [
        d[1] * axis[2] - d[2] * axis[1],
        d[2] * axis[0] - d[0] * axis[2],
        d[0] * axis[1] - d[1] * axis[0],
    ];
    let norm = (e1[0] * e1[0] + e1[1] * e1[1] + e1[2] * e1[2]).sqrt();
    e1.iter_mut().for_each(|v| *v /= norm);
    let e2 = [
        d[1] * e1[2] - d[2] * e1[1],
        d[2] * e1[0] - d[0] * e1[2],
        d[0] * e1[1] - d[1] * e1[0],
    ];
    let (s, c) = psi.sin_cos();
    let (sp, cp) = phi.sin_cos();
    let mut out = [0.0; 3];
    for i in 0..3 {
        out[i] = c * d[i] + s * (cp * e1[i] + sp * e2[i]);
    }
    let n = (out[0] * out[0] + out[1] * out[1] + out[2] * out[2]).sqrt();
    out.iter_mut().for_each(|v| *v /= n);
    out
}

struct Transport<'a> {
    target: &'a TargetMaterial,
    slab: f64,
    options: TransportOptions,
    free_path: f64,
    p_max: f64,
    cutoff: f64,
    /// Cumulative stoichiometric fractions for partner selection.
    cumulative: Vec<f64>,
}

impl<'a> Transport<'a> {
    fn new(target: &'a TargetMaterial, slab: f64, options: TransportOptions) -> Self {
        let n = target.atomic_density_per_nm3();
        let mut acc = 0.0;
        let cumulative = target
            .components()
            .iter()
            .map(|c| {
                acc += c.fraction;
                acc
            })
            .collect();
        Self {
            target,
            slab,
            options,
            free_path: n.powf(-1.0 / 3.0),
            p_max: 1.0 / (PI * n.powf(2.0 / 3.0)).sqrt(),
            cutoff: target.surface_binding_energy().min(LOW_ENERGY_CUTOFF_EV),
            cumulative,
        }
    }

    fn pick_partner(&self, rng: &mut ChaCha8Rng) -> usize {
        if self.cumulative.len() == 1 {
            return 0;
        }
        let r: f64 = rng.random();
        self.cumulative
            .iter()
            .position(|&c| r < c)
            .unwrap_or(self.cumulative.len() - 1)
    }

    fn cm_angle(&self, eps: f64, b: f64) -> Result<f64, BcaError> {
        match self.options.kernel {
            ScatteringKernel::Magic => {
                let x0 = closest_approach(eps, b)?;
                Ok(magic_with_turning_point(
                    eps,
                    b,
                    x0,
                    MagicCoefficients::default(),
                ))
            }
            ScatteringKernel::Quadrature => scattering_angle_quadrature(eps, b),
        }
    }

    fn run(&self, beam: &IonBeam, stream: RngStream) -> Result<CascadeRecord, BcaError> {
        let mut rng = stream.rng();
        let tilt = beam.tilt_angle.to_radians();
        let e0 = beam.energy_ev();
        let mut record = CascadeRecord {
            ion_index: stream.stream_key,
            final_position: FinalPosition::Stopped { depth: 0.0 },
            vacancies: Vec::new(),
            initial_energy: e0,
            energy_to_electrons: 0.0,
            energy_to_phonons: 0.0,
            energy_escaped: 0.0,
        };
        let mut stack = vec![Particle {
            element: beam.ion,
            energy: e0,
            pos: [0.0; 3],
            dir: [tilt.cos(), tilt.sin(), 0.0],
            primary: true,
            fresh: true,
        }];
        // k for each moving species is cached per particle type; only two
        // species ever move in a single-element target.
        let k_ion = lindhard_scharff_k(&beam.ion, self.target);
        let k_recoil: Vec<f64> = self
            .target
            .components()
            .iter()
            .map(|c| lindhard_scharff_k(&c.element, self.target))
            .collect();

        while let Some(mut p) = stack.pop() {
            let k_e = if p.primary {
                k_ion
            } else {
                self.target
                    .components()
                    .iter()
                    .position(|c| c.element == p.element)
                    .map(|i| k_recoil[i])
                    .unwrap_or_else(|| lindhard_scharff_k(&p.element, self.target))
            };
            self.follow(&mut p, k_e, &mut rng, &mut record, &mut stack)?;
        }
        Ok(record)
    }

    fn follow(
        &self,
        p: &mut Particle,
        k_e: f64,
        rng: &mut ChaCha8Rng,
        record: &mut CascadeRecord,
        stack: &mut Vec<Particle>,
    ) -> Result<(), BcaError> {
        let full = self.options.mode == DamageMode::FullCascade;
        loop {
            if !p.energy.is_finite() {
                return Err(BcaError::NonFiniteEnergy {
                    ion_index: record.ion_index,
                    energy: p.energy,
                });
            }
            if p.energy < self.cutoff {
                record.energy_to_phonons += p.energy;
                if p.primary {
                    record.final_position = FinalPosition::Stopped { depth: p.pos[0] };
                }
                return Ok(());
            }

            // Free flight with continuous electronic loss. An ion entering
            // the surface starts at a random phase of the free path.
            let step = if p.fresh && p.primary {
                self.free_path * rng.random::<f64>()
            } else {
                self.free_path
            };
            p.fresh = false;
            for i in 0..3 {
                p.pos[i] += step * p.dir[i];
            }
            let loss = (k_e * (p.energy * 1e-3).sqrt() * step).min(p.energy);
            p.energy -= loss;
            record.energy_to_electrons += loss;

            if p.pos[0] < 0.0 || p.pos[0] > self.slab {
                record.energy_escaped += p.energy;
                if p.primary {
                    record.final_position = if p.pos[0] < 0.0 {
                        FinalPosition::Backscattered
                    } else {
                        FinalPosition::Transmitted
                    };
                }
                return Ok(());
            }
            if p.energy < self.cutoff {
                continue;
            }

            // Binary collision with a partner sampled on the impact disc.
            let comp = self.target.components()[self.pick_partner(rng)];
            let partner = comp.element;
            let a = screening_length(p.element.z(), partner.z());
            let eps = reduced_energy(&p.element, &partner, p.energy);
            let impact = self.p_max * rng.random::<f64>().sqrt();
            let theta = self.cm_angle(eps, impact / a)?;
            let phi = 2.0 * PI * rng.random::<f64>();

            let (m1, m2) = (p.element.mass, partner.mass);
            let gamma = 4.0 * m1 * m2 / (m1 + m2).powi(2);
            let half = (0.5 * theta).sin();
            let transfer = (gamma * p.energy * half * half).min(p.energy);
            let remaining = p.energy - transfer;
            let psi = theta.sin().atan2(theta.cos() + m1 / m2);
            let recoil_angle = 0.5 * (PI - theta);
            let depth = p.pos[0];
            let ed = comp.displacement_energy;

            if full {
                if transfer > ed {
                    let eb = self.target.lattice_binding_energy().min(transfer);
                    record.energy_to_phonons += eb;
                    stack.push(Particle {
                        element: partner,
                        energy: transfer - eb,
                        pos: p.pos,
                        dir: rotate(p.dir, recoil_angle, phi + PI),
                        primary: false,
                        fresh: false,
                    });
                    let replaced = self.options.replacement_collisions
                        && remaining < ed
                        && p.element.atomic_number == partner.atomic_number;
                    if replaced {
                        // The projectile settles into the vacated site.
                        record.energy_to_phonons += remaining;
                        p.energy = 0.0;
                        if p.primary {
                            record.final_position = FinalPosition::Stopped { depth };
                        }
                        return Ok(());
                    }
                    record.vacancies.push(CollisionEvent {
                        depth,
                        energy_transferred: transfer,
                        recoil_displaced: true,
                        weight: 1.0,
                    });
                } else {
                    record.energy_to_phonons += transfer;
                }
            } else {
                let damage = match self.options.partition {
                    DamagePartition::Robinson => damage_energy(&partner, self.target, transfer),
                    DamagePartition::Direct => transfer,
                };
                record.energy_to_phonons += damage;
                record.energy_to_electrons += transfer - damage;
                let nu = nrt_displacements(damage, ed);
                if nu > 0.0 {
                    record.vacancies.push(CollisionEvent {
                        depth,
                        energy_transferred: transfer,
                        recoil_displaced: true,
                        weight: nu,
                    });
                }
            }

            p.energy = remaining;
            p.dir = rotate(p.dir, psi, phi);
        }
    }
}

fn validate(slab_thickness: f64) -> Result<(), BcaError> {
    if !(slab_thickness.is_finite() && slab_thickness > 0.0) {
        return Err(BcaError::InvalidSlab(slab_thickness));
    }
    Ok(())
}

/// Transports one ion (and, in full-cascade mode, all of its displaced
/// recoils) through a slab of `slab_thickness` nm.
pub fn transport_ion(
    beam: &IonBeam,
    target: &TargetMaterial,
    slab_thickness: f64,
    options: TransportOptions,
    stream: RngStream,
) -> Result<CascadeRecord, BcaError> {
    validate(slab_thickness)?;
    Transport::new(target, slab_thickness, options).run(beam, stream)
}

/// Runs `n_ions` independent cascades. Ion `i` draws from stream
/// `(seed, i)`, so the result does not depend on `threads` (0 = rayon
/// default).
pub fn run_implantation(
    beam: &IonBeam,
    target: &TargetMaterial,
    slab_thickness: f64,
    n_ions: u64,
    options: TransportOptions,
    seed: u64,
    threads: usize,
) -> Result<Vec<CascadeRecord>, BcaError> {
    validate(slab_thickness)?;
    if n_ions == 0 {
        return Err(BcaError::NoIons);
    }
    let engine = Transport::new(target, slab_thickness, options);
    let work = || {
        (0..n_ions)
            .into_par_iter()
            .map(|i| engine.run(beam, RngStream::new(seed, i)))
            .collect::<Result<Vec<_>, _>>()
    };
    if threads == 0 {
        work()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| BcaError::ThreadPool(e.to_string()))?
            .install(work)
    }
}
