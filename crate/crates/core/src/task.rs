use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// The three supported classification tasks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Australian,
    German,
    Banknote,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::Australian, Task::German, Task::Banknote];

    pub fn name(self) -> &'static str {
        match self {
            Task::Australian => "australian",
            Task::German => "german",
            Task::Banknote => "banknote",
        }
    }

    /// Predictive attribute count of the distributed file.
    pub fn native_dim(self) -> usize {
        match self {
            Task::Australian => 14,
            Task::German => 24,
            Task::Banknote => 4,
        }
    }

    /// Columns per row in the distributed file, class included.
    pub fn column_count(self) -> usize {
        self.native_dim() + 1
    }

    pub fn instance_count(self) -> usize {
        match self {
            Task::Australian => 690,
            Task::German => 1000,
            Task::Banknote => 1372,
        }
    }

    /// File name of the UCI distribution.
    pub fn file_name(self) -> &'static str {
        match self {
            Task::Australian => "australian.dat",
            Task::German => "german.data-numeric",
            Task::Banknote => "data_banknote_authentication.txt",
        }
    }

    pub fn is_comma_separated(self) -> bool {
        matches!(self, Task::Banknote)
    }

    /// Stable small integer used in seed derivation.
    pub(crate) fn index(self) -> u64 {
        match self {
            Task::Australian => 0,
            Task::German => 1,
            Task::Banknote => 2,
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "australian" => Ok(Task::Australian),
            "german" => Ok(Task::German),
            "banknote" => Ok(Task::Banknote),
            other => Err(Error::UnknownTask(other.to_string())),
        }
    }
}

/// Parse a comma-separated task list such as `australian,german`.
pub fn parse_task_list(s: &str) -> Result<Vec<Task>, Error> {
    let tasks = s
        .split(',')
        .filter(|t| !t.trim().is_empty())
        .map(str::parse)
        .collect::<Result<Vec<Task>, _>>()?;
    if tasks.is_empty() {
        return Err(Error::UnknownTask(s.to_string()));
    }
    Ok(tasks)
}
