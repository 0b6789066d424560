import json
from pathlib import Path

import pandas as pd


class File:
    @staticmethod
    def readFile(path):
        try:
            with open(path, mode="r", encoding="utf-8") as f:
                data = json.loads(f.read())
            return data
        except IOError:
            raise

    @staticmethod
    def writeFile(data, path):
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, mode="w", encoding="utf-8") as f:
            f.write(json.dumps(data, ensure_ascii=True, indent=4, sort_keys=False))

    @staticmethod
    def writeCsv(frame: pd.DataFrame, path, float_format=None):
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        # fixed line terminator keeps the bytes identical across platforms
        frame.to_csv(path, index=False, float_format=float_format, lineterminator="\n")

