"""Regenerate src/halfheat/calibration.json from the solver."""
import json
import pathlib
import sys

from halfheat.calibration import calibrate


def main():
    out = pathlib.Path(sys.argv[1]) if len(sys.argv) > 1 else pathlib.Path(__file__).resolve().parents[1] / "src" / "halfheat" / "calibration.json"
    data = calibrate()
    out.write_text(json.dumps(data, indent=2) + "\n")
    print(json.dumps(data["constants"], indent=2))


if __name__ == "__main__":
    main()
