"""Regenerate the bundled stand-in dataset and its schema."""
from __future__ import annotations

import json

from synthmetric.dataset import schema_to_json, write_csv
from synthmetric.standin import STANDIN_SCHEMA, generate_standin, standin_paths

if __name__ == "__main__":
    csv_path, schema_path = standin_paths()
    write_csv(generate_standin(), csv_path)
    with open(schema_path, "w", encoding="utf-8") as fh:
        json.dump(schema_to_json(STANDIN_SCHEMA), fh, indent=2)
        fh.write("\n")
    print(f"wrote {csv_path} and {schema_path}")
