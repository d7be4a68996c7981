# SOUP Experiments Module
