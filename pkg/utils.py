"""Utility functions for formatting and exporting study results."""

import json
import math
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

import config


def round_sig(value: float, digits: int = config.OUTPUT_SIGNIFICANT_DIGITS) -> float:
    """Round to a number of significant digits."""
    if value is None or not math.isfinite(value) or value == 0:
        return value
    return float(f"{value:.{digits}g}")


def fmt_sig(value: Optional[float], digits: int = config.OUTPUT_SIGNIFICANT_DIGITS) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return "NA"
    return f"{value:.{digits}g}"


def round_nested(data: Any, digits: int = config.OUTPUT_SIGNIFICANT_DIGITS) -> Any:
    """Round every float inside dicts and lists; NaN becomes None."""
    if isinstance(data, dict):
        return {str(k): round_nested(v, digits) for k, v in data.items()}
    if isinstance(data, (list, tuple)):
        return [round_nested(v, digits) for v in data]
    if isinstance(data, (bool, np.bool_)):
        return bool(data)
    if isinstance(data, (int, np.integer)):
        return int(data)
    if isinstance(data, (float, np.floating)):
        if math.isnan(data):
            return None
        return round_sig(float(data), digits)
    return data


def format_percentage(value: Optional[float], decimals: int = 1) -> str:
    """Format percentage values."""
    if value is None:
        return "n/a"
    return f"{value:.{decimals}f}%"


def format_slots(slots: Sequence[int]) -> str:
    """On-slot list as space-separated slot numbers."""
    return " ".join(str(int(t)) for t in slots)


def parse_slots(text: str) -> Tuple[int, ...]:
    if not isinstance(text, str) or not text.strip():
        return ()
    return tuple(int(t) for t in text.split())


def parse_value_list(text: str) -> List[float]:
    """Comma-separated numbers, e.g. '0,5,10,20'."""
    values = [item.strip() for item in text.split(',') if item.strip()]
    if not values:
        raise ValueError("Value list is empty")
    return [float(v) for v in values]


def create_summary_report(data: Dict[str, Any], title: str = "Study Summary") -> str:
    """Create a formatted summary report from study results."""
    width = config.DISPLAY_WIDTH
    report = f"\n{'=' * width}\n"
    report += f"{title:^{width}}\n"
    report += f"{'=' * width}\n\n"

    for key, value in data.items():
        key_formatted = key.replace('_', ' ').title()

        if value is None:
            report += f"{key_formatted:.<45} n/a\n"
        elif isinstance(value, float):
            if 'pct' in key.lower():
                report += f"{key_formatted:.<45} {format_percentage(value)}\n"
            elif 'cents' in key.lower():
                report += f"{key_formatted:.<45} {value:,.2f} ¢\n"
            elif 'kwh' in key.lower():
                report += f"{key_formatted:.<45} {value:,.4f} kWh\n"
            elif '_pu' in key.lower():
                report += f"{key_formatted:.<45} {value:.5f} pu\n"
            else:
                report += f"{key_formatted:.<45} {value:,.4f}\n"
        elif isinstance(value, int):
            report += f"{key_formatted:.<45} {value:,}\n"
        else:
            report += f"{key_formatted:.<45} {value}\n"

    report += f"\n{'=' * width}\n"
    return report


def export_to_json(data: Any, filepath: Union[str, Path]):
    """Export data to JSON with stable key order and rounded floats."""
    with open(filepath, 'w', encoding='utf-8', newline='\n') as f:
        json.dump(round_nested(data), f, indent=2, sort_keys=True, default=str)
        f.write('\n')


def export_to_csv(df: pd.DataFrame, filepath: Union[str, Path]):
    """Export DataFrame to CSV with fixed significant digits."""
    df.to_csv(filepath, index=False, encoding='utf-8', lineterminator='\n',
              float_format=f"%.{config.OUTPUT_SIGNIFICANT_DIGITS}g", na_rep='NA')
