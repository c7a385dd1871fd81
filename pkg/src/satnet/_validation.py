"""Input validation helpers shared by the estimator-style classes."""
from __future__ import annotations

from collections.abc import Mapping

from sklearn.exceptions import NotFittedError
from sklearn.utils.validation import check_is_fitted as _sk_check_is_fitted

from satnet.errors import ValidationError
from satnet.geometry import GroundSiteSpec, ShellSpec


def check_is_fitted(estimator, attribute):
    try:
        _sk_check_is_fitted(estimator, attribute)
    except NotFittedError as exc:
        raise NotFittedError(
            f"{type(estimator).__name__} is not fitted yet; call fit first") from exc


def _coerce(items, cls, what):
    out = []
    for i, item in enumerate(items):
        if isinstance(item, cls):
            out.append(item)
        elif isinstance(item, Mapping):
            try:
                out.append(cls(**item))
            except ValidationError as exc:
                raise ValidationError(f"{what}[{i}].{exc.field}: {exc}",
                                      field=f"{what}[{i}].{exc.field}") from exc
            except TypeError as exc:
                raise ValidationError(f"{what}[{i}]: {exc}", field=f"{what}[{i}]") from exc
        else:
            raise ValidationError(f"{what}[{i}] must be a {cls.__name__} or mapping",
                                  field=f"{what}[{i}]")
    return out


def check_shells(shells):
    shells = _coerce(shells, ShellSpec, "shells")
    names = [s.name for s in shells]
    if len(set(names)) != len(names):
        raise ValidationError("shell names must be unique", field="shells")
    return shells


def check_sites(sites):
    sites = _coerce(sites, GroundSiteSpec, "ground_sites")
    names = [s.name for s in sites]
    if len(set(names)) != len(names):
        raise ValidationError("ground site names must be unique", field="ground_sites")
    return sites


def check_positive_int(value, name, minimum=1):
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        raise ValidationError(f"{name} must be an integer >= {minimum}, got {value!r}",
                              field=name)
    return value
