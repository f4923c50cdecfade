import json
from pathlib import Path

import numpy as np


class NumpyEncoder(json.JSONEncoder):
    def default(self, obj):
        if isinstance(obj, np.integer):
            return int(obj)
        elif isinstance(obj, np.floating):
            return float(obj)
        elif isinstance(obj, np.bool_):
            return bool(obj)
        elif isinstance(obj, np.ndarray):
            return obj.tolist()
        elif isinstance(obj, complex):
            return {'re': obj.real, 'im': obj.imag}
        elif isinstance(obj, Path):
            return str(obj)
        return super().default(obj)


def dump_json(obj, path):
    """Write `obj` with sorted keys and LF line endings so repeated runs give identical files."""
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        json.dump(obj, f, cls=NumpyEncoder, sort_keys=True, indent=2)
        f.write('\n')
    return Path(path)
