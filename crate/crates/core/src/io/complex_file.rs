use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{write_atomic, FormatError};
use crate::geometry::{AtomRecord, Complex, Element, Role};
use crate::Error;

pub const COMPLEX_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AtomEntry {
    element: String,
    xyz: [f64; 3],
    role: Role,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ComplexFile {
    format_version: u32,
    atoms: Vec<AtomEntry>,
    scaffold_mask: Vec<bool>,
}

/// Pretty-printed JSON; floats use the shortest representation that reads
/// back to the same bits.
pub fn complex_to_json(complex: &Complex) -> String {
    let file = ComplexFile {
        format_version: COMPLEX_FORMAT_VERSION,
        atoms: complex
            .atoms
            .iter()
            .map(|a| AtomEntry { element: a.element.symbol().to_string(), xyz: a.position, role: a.role })
            .collect(),
        scaffold_mask: complex.scaffold_mask.clone(),
    };
    let mut s = serde_json::to_string_pretty(&file).unwrap_or_default();
    s.push('\n');
    s
}

pub fn complex_from_json(text: &str) -> Result<Complex, FormatError> {
    let file: ComplexFile = serde_json::from_str(text).map_err(|e| FormatError::json(&e))?;
    if file.format_version != COMPLEX_FORMAT_VERSION {
        return Err(FormatError::Version { found: file.format_version, expected: COMPLEX_FORMAT_VERSION });
    }
    if file.scaffold_mask.len() != file.atoms.len() {
        return Err(FormatError::Field {
            field: "scaffold_mask".into(),
            message: format!("has {} entries for {} atoms", file.scaffold_mask.len(), file.atoms.len()),
        });
    }
    let mut atoms = Vec::with_capacity(file.atoms.len());
    for (i, a) in file.atoms.into_iter().enumerate() {
        let element: Element = a
            .element
            .parse()
            .map_err(|_| FormatError::UnknownElement { atom: i, symbol: a.element.clone() })?;
        if !a.xyz.iter().all(|v| v.is_finite()) {
            return Err(FormatError::Field { field: format!("atoms[{i}].xyz"), message: "non-finite coordinate".into() });
        }
        if element.is_ligand() == (a.role == Role::Pocket) {
            return Err(FormatError::Field {
                field: format!("atoms[{i}].role"),
                message: format!("role {:?} does not fit element {}", a.role, element.symbol()),
            });
        }
        if file.scaffold_mask[i] != (a.role == Role::Scaffold) {
            return Err(FormatError::Field {
                field: format!("scaffold_mask[{i}]"),
                message: format!("disagrees with role {:?}", a.role),
            });
        }
        atoms.push(AtomRecord { element, position: a.xyz, role: a.role });
    }
    Ok(Complex { atoms, scaffold_mask: file.scaffold_mask })
}

pub fn read_complex(path: &Path) -> Result<Complex, Error> {
    let text = std::fs::read_to_string(path)?;
    Ok(complex_from_json(&text)?)
}

pub fn write_complex(path: &Path, complex: &Complex) -> Result<(), Error> {
    Ok(write_atomic(path, complex_to_json(complex).as_bytes())?)
}
