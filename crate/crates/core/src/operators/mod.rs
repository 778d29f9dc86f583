//! Operator catalog, control maps and the hypothesis auditor.

mod audit;
mod control_map;
mod nonlinearity;
mod spec;

pub use audit::{audit_hypotheses, audit_with, AuditOptions, AuditReport, CoercivityFit};
pub use control_map::{ControlMap, ControlMode, Projection};
pub use nonlinearity::{Nonlinearity, Reaction};
pub use spec::{OperatorKind, OperatorSpec, SpaceRoles};

use crate::error::Result;
use crate::hilbert::Field;

pub fn apply_A(spec: &OperatorSpec, y: &Field) -> Result<Field> {
    spec.apply_A(y)
}

pub fn apply_Aprime(spec: &OperatorSpec, y: &Field, z: &Field) -> Result<Field> {
    spec.apply_Aprime(y, z)
}

pub fn apply_Aprime_adjoint(spec: &OperatorSpec, y: &Field, p: &Field) -> Result<Field> {
    spec.apply_Aprime_adjoint(y, p)
}

pub fn apply_B(map: &ControlMap, u: &Field) -> Result<Field> {
    map.apply_B(u)
}

pub fn apply_Bstar(map: &ControlMap, v: &Field) -> Result<Field> {
    map.apply_Bstar(v)
}
