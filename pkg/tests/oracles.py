"""Independent oracle implementations, kept deliberately naive.

These re-implement rule evaluation and the calibration metrics from their
definitions, sharing no code with the library paths they check.
"""

from __future__ import annotations

import re


def naive_evaluate(rule_obj: dict, event_fields: dict[str, str]) -> bool:
    """Direct re-reading of the rule semantics over a plain field mapping.

    event_fields maps variable names (including "header:<name>") to strings;
    absent variables are empty. Regex constants run through Python's re with
    ASCII classes and \\A/\\Z anchors, matching the rule dialect.
    """
    results = []
    for condition in rule_obj["conditions"]:
        value = event_fields.get(condition["var"], "")
        constant = condition["constant"]
        op = condition["comparison"]
        if op == "equals":
            outcome = value == constant
        elif op == "contains":
            outcome = constant in value
        elif op == "starts_with":
            outcome = value.startswith(constant)
        elif op == "ends_with":
            outcome = value.endswith(constant)
        elif op == "equals_ignore_case":
            outcome = value.lower() == constant.lower()
        elif op == "contains_ignore_case":
            outcome = constant.lower() in value.lower()
        elif op == "regex":
            pattern = constant.replace("^", r"\A").replace("$", r"\Z")
            outcome = re.search(pattern, value, re.ASCII) is not None
        else:
            raise ValueError(f"unknown comparison {op}")
        results.append(outcome)
    if rule_obj["conditions_match"] == "and":
        return all(results)
    return any(results)


def event_fields_of(event) -> dict[str, str]:
    fields = {
        "method": event.method,
        "path": event.path,
        "path_decoded": event.path_decoded,
        "query_string": event.query_string,
        "query_string_decoded": event.query_string_decoded,
        "body": event.body,
    }
    for name, value in event.headers.items():
        fields[f"header:{name}"] = value
    return fields


def brute_force_ece(confidences: list[float], corrects: list[bool], num_bins: int) -> float:
    """Two-loop ECE straight from the definition, right-inclusive bins."""
    n = len(confidences)
    total = 0.0
    for b in range(num_bins):
        lower = b / num_bins
        upper = (b + 1) / num_bins
        members = [
            i
            for i in range(n)
            if (lower < confidences[i] <= upper) or (b == 0 and confidences[i] == lower)
        ]
        if not members:
            continue
        accuracy = sum(1 for i in members if corrects[i]) / len(members)
        mean_conf = sum(confidences[i] for i in members) / len(members)
        total += (len(members) / n) * abs(accuracy - mean_conf)
    return total


def brute_force_auroc(confidences: list[float], corrects: list[bool]) -> float:
    """All (correct, incorrect) pairs; ties count one half."""
    positives = [confidences[i] for i in range(len(corrects)) if corrects[i]]
    negatives = [confidences[i] for i in range(len(corrects)) if not corrects[i]]
    total = 0.0
    for p in positives:
        for q in negatives:
            if p > q:
                total += 1.0
            elif p == q:
                total += 0.5
    return total / (len(positives) * len(negatives))
