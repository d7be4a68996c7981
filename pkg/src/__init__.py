# SOUP Dictionary Learning Toolkit Package
