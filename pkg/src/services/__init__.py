"""Numerical services for flipscope"""
