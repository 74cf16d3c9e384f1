"""Reflexive world models: a frozen base policy and forward model plus an
online reflex controller adapted by sign-inverted model gradients."""

__version__ = "0.1.0"
