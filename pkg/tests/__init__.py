"""Tests for mrfg-stance."""
