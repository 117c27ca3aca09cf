# Data modules for static application datasets.
