use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::attributes::{AttributeVector, ATTRIBUTE_NAMES, NUM_ATTRIBUTES};
use crate::error::{config_err, Error, Result};

pub const ATTR_FILE: &str = "list_attr_celeba.txt";
pub const PARTITION_FILE: &str = "list_eval_partition.txt";
pub const IMAGE_DIR: &str = "img_align_celeba";

/// Column header of the annotation file, in file order.
pub const CELEBA_ATTRIBUTE_NAMES: [&str; 40] = [
    "5_o_Clock_Shadow", "Arched_Eyebrows", "Attractive", "Bags_Under_Eyes", "Bald", "Bangs",
    "Big_Lips", "Big_Nose", "Black_Hair", "Blond_Hair", "Blurry", "Brown_Hair", "Bushy_Eyebrows",
    "Chubby", "Double_Chin", "Eyeglasses", "Goatee", "Gray_Hair", "Heavy_Makeup",
    "High_Cheekbones", "Male", "Mouth_Slightly_Open", "Mustache", "Narrow_Eyes", "No_Beard",
    "Oval_Face", "Pale_Skin", "Pointy_Nose", "Receding_Hairline", "Rosy_Cheeks", "Sideburns",
    "Smiling", "Straight_Hair", "Wavy_Hair", "Wearing_Earrings", "Wearing_Hat", "Wearing_Lipstick",
    "Wearing_Necklace", "Wearing_Necktie", "Young",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    fn from_code(code: &str) -> Option<Self> {
        match code {
            "0" => Some(Split::Train),
            "1" => Some(Split::Val),
            "2" => Some(Split::Test),
            _ => None,
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Split::Train => 0,
            Split::Val => 1,
            Split::Test => 2,
        }
    }
}

/// Which records an operation draws from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitSelection {
    Train,
    Val,
    Test,
    /// Train and validation together, used for generator training.
    TrainVal,
}

impl SplitSelection {
    pub fn contains(self, split: Split) -> bool {
        match self {
            SplitSelection::Train => split == Split::Train,
            SplitSelection::Val => split == Split::Val,
            SplitSelection::Test => split == Split::Test,
            SplitSelection::TrainVal => split != Split::Test,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Self::Train),
            "val" => Ok(Self::Val),
            "test" => Ok(Self::Test),
            "trainval" => Ok(Self::TrainVal),
            _ => Err(config_err!("unknown split `{s}` (train|val|test|trainval)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Record {
    pub filename: String,
    pub labels: AttributeVector,
    pub split: Split,
}

/// Parsed annotation and partition files.
#[derive(Clone, Debug, Default)]
pub struct DatasetIndex {
    pub records: Vec<Record>,
}

impl DatasetIndex {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Positions of the records in `selection`, in file order.
    pub fn select(&self, selection: SplitSelection) -> Vec<usize> {
        self.records
            .iter()
            .enumerate()
            .filter(|(_, r)| selection.contains(r.split))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn split_sizes(&self) -> [usize; 3] {
        let mut sizes = [0; 3];
        for r in &self.records {
            sizes[r.split.code() as usize] += 1;
        }
        sizes
    }

    pub fn find(&self, filename: &str) -> Option<&Record> {
        self.records.iter().find(|r| r.filename == filename)
    }
}

/// Load an attribute file and a partition file.
pub fn load_index(attr_file: &Path, partition_file: &Path) -> Result<DatasetIndex> {
    let attrs = std::fs::read_to_string(attr_file).map_err(|e| Error::io(attr_file, e))?;
    let parts = std::fs::read_to_string(partition_file).map_err(|e| Error::io(partition_file, e))?;
    parse_index(&attrs, attr_file, &parts, partition_file)
}

/// Parse in-memory file contents; paths only label error messages.
pub fn parse_index(
    attr_text: &str,
    attr_path: &Path,
    partition_text: &str,
    partition_path: &Path,
) -> Result<DatasetIndex> {
    let perr = |path: &Path, line: usize, msg: String| Error::Parse {
        path: PathBuf::from(path),
        line,
        msg,
    };

    let mut lines = attr_text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, count_line) = lines
        .next()
        .ok_or_else(|| perr(attr_path, 1, "empty file".into()))?;
    let expected: usize = count_line
        .trim()
        .parse()
        .map_err(|_| perr(attr_path, 1, format!("expected a record count, got `{}`", count_line.trim())))?;
    let (_, header) = lines
        .next()
        .ok_or_else(|| perr(attr_path, 2, "missing attribute-name header".into()))?;
    let names: Vec<&str> = header.split_whitespace().collect();
    if names.is_empty() {
        return Err(perr(attr_path, 2, "empty attribute-name header".into()));
    }
    let columns: Vec<usize> = ATTRIBUTE_NAMES
        .iter()
        .map(|want| {
            names.iter().position(|n| n == want).ok_or_else(|| {
                config_err!("attribute `{want}` missing from {}", attr_path.display())
            })
        })
        .collect::<Result<_>>()?;

    let mut partitions: HashMap<&str, Split> = HashMap::new();
    for (i, line) in partition_text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut tok = line.split_whitespace();
        let (Some(file), Some(code), None) = (tok.next(), tok.next(), tok.next()) else {
            return Err(perr(partition_path, line_no, "expected `<filename> <0|1|2>`".into()));
        };
        let split = Split::from_code(code)
            .ok_or_else(|| perr(partition_path, line_no, format!("unknown split code `{code}`")))?;
        if partitions.insert(file, split).is_some() {
            return Err(perr(partition_path, line_no, format!("duplicate entry `{file}`")));
        }
    }

    let mut records = Vec::with_capacity(expected);
    let mut last_line = 2;
    for (line_no, line) in lines {
        last_line = line_no;
        if line.trim().is_empty() {
            continue;
        }
        let tok: Vec<&str> = line.split_whitespace().collect();
        if tok.len() != names.len() + 1 {
            return Err(perr(
                attr_path,
                line_no,
                format!("expected {} fields, found {}", names.len() + 1, tok.len()),
            ));
        }
        if records.len() == expected {
            return Err(perr(attr_path, line_no, format!("more rows than the declared {expected}")));
        }
        let mut signs = Vec::with_capacity(names.len());
        for v in &tok[1..] {
            signs.push(match *v {
                "1" => true,
                "-1" => false,
                v => return Err(perr(attr_path, line_no, format!("attribute value must be 1 or -1, got `{v}`"))),
            });
        }
        let mut bits = [false; NUM_ATTRIBUTES];
        for (bit, &col) in bits.iter_mut().zip(&columns) {
            *bit = signs[col];
        }
        let filename = tok[0];
        let split = *partitions.get(filename).ok_or_else(|| {
            perr(attr_path, line_no, format!("`{filename}` has no entry in {}", partition_path.display()))
        })?;
        records.push(Record {
            filename: filename.to_string(),
            labels: AttributeVector(bits),
            split,
        });
    }
    if records.len() != expected {
        return Err(perr(
            attr_path,
            last_line,
            format!("header declares {expected} records, found {}", records.len()),
        ));
    }
    Ok(DatasetIndex { records })
}

/// Render records in the annotation/partition text formats. The 27 columns
/// outside the selected attributes are written as -1.
pub fn render_index(records: &[Record]) -> (String, String) {
    let mut attrs = format!("{}\n{}\n", records.len(), CELEBA_ATTRIBUTE_NAMES.join(" "));
    let mut parts = String::new();
    for r in records {
        attrs.push_str(&r.filename);
        for name in CELEBA_ATTRIBUTE_NAMES {
            let on = ATTRIBUTE_NAMES
                .iter()
                .position(|n| *n == name)
                .is_some_and(|i| r.labels.0[i]);
            attrs.push_str(if on { "  1" } else { " -1" });
        }
        attrs.push('\n');
        let _ = writeln!(parts, "{} {}", r.filename, r.split.code());
    }
    (attrs, parts)
}
