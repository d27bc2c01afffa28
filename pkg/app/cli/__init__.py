# Command-line Package
