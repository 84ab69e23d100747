"""Command packages loaded by FlipscopeApp"""
