# SOUP Storage Module
