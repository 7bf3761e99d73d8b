"""Pacote de utilidades partilhadas."""
