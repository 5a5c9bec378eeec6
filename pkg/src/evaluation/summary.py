# summary.py
"""
Summary - Plain-language summary of an evaluation report.
Picks out the headline rate, the dominant failure mode and notable objects.
"""

from typing import Optional

from .harness import EvalReport


def summarize(report: EvalReport, other: Optional[EvalReport] = None) -> str:
    """
    Generate a short summary of a report.

    Args:
        report: Evaluation report
        other: Optional paired report to compare against

    Returns:
        A few sentences of text
    """
    if not report.trials:
        return "No trials were run."
    summary = report.summary()

    overall = summary["success"]["overall"]
    sentences = [
        f"The {report.variant.replace('_', '-')} policy succeeded on {overall['successes']} of "
        f"{overall['completed']} completed grasps ({overall['rate']:.0%})."
    ]

    counts = summary["counts"]
    slips, deformations = counts["slip_failure"], counts["deformation_failure"]
    if slips or deformations:
        dominant = "deformation" if deformations >= slips else "slip"
        sentences.append(
            f"Failures were mostly {dominant} ({deformations} deformation, {slips} slip)."
        )
    else:
        sentences.append("There were no slip or deformation failures.")

    if summary["null_attempts"]:
        sentences.append(
            f"{summary['null_attempts']} attempts stopped short of the object and were retried "
            f"({summary['null_rate']:.0%} of attempts)."
        )

    per_object = sorted(summary["per_object"], key=lambda r: (r["successes"] / r["trials"], r["object"]))
    if per_object and per_object[0]["successes"] < per_object[0]["trials"]:
        worst = per_object[0]
        sentences.append(f"The hardest object was the {worst['object']} ({worst['successes']}/{worst['trials']}).")

    if other is not None:
        delicate = summary["success"]["delicate"]["rate"]
        other_delicate = other.summary()["success"]["delicate"]["rate"]
        sentences.append(
            f"On delicate objects it scored {delicate:.0%} against {other_delicate:.0%} for the "
            f"{other.variant.replace('_', '-')} policy."
        )

    return " ".join(sentences)
