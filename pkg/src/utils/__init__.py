# Shared helpers: logging, determinism, checksums, report rendering
