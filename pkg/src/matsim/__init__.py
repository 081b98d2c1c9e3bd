"""Distributed max-area triangulation simulator and analysis toolkit."""
